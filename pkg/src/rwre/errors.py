"""Exception hierarchy shared by every module of the package."""


class RWREError(Exception):
    """Base class; ``code`` is the machine-readable tag used by the CLI."""

    code = "rwre_error"
    module = "rwre"

    def __init__(self, message="", **context):
        super().__init__(message)
        self.message = message
        self.context = context

    def to_dict(self):
        return {
            "code": self.code,
            "module": self.module,
            "message": self.message,
            "context": {k: _jsonable(v) for k, v in self.context.items()},
        }


def _jsonable(v):
    if isinstance(v, (str, int, float, bool)) or v is None:
        return v
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    try:
        return float(v)
    except (TypeError, ValueError):
        return repr(v)


class NonUnitDirection(RWREError):
    code = "non_unit_direction"
    module = "lattice_geometry"


class EmptyBox(RWREError):
    code = "empty_box"
    module = "lattice_geometry"


class OutOfSlab(RWREError):
    code = "out_of_slab"
    module = "environment_model"


class InvalidLaw(RWREError):
    code = "invalid_law"
    module = "environment_model"


class InsufficientSamples(RWREError):
    code = "insufficient_samples"
    module = "annealed_mc"


class SingularSystem(RWREError):
    code = "singular_system"
    module = "quenched_solver"


class NonConvergence(RWREError):
    code = "non_convergence"
    module = "quenched_solver"


class InvalidProblem(RWREError):
    code = "invalid_problem"
    module = "quenched_solver"


class StartOutsideBox(RWREError):
    code = "start_outside_box"
    module = "quenched_solver"


class BracketNotTight(RWREError):
    code = "bracket_not_tight"
    module = "quenched_solver"


class StepBudgetExceeded(RWREError):
    code = "step_budget_exceeded"
    module = "annealed_mc"


class TooFewScales(RWREError):
    code = "too_few_scales"
    module = "ballisticity_checks"


class ConstraintViolation(RWREError):
    """A scale-ladder constraint failed; ``display`` names the violated condition."""

    code = "constraint_violation"
    module = "renormalization_harness"

    def __init__(self, display, message="", **context):
        super().__init__(f"{display}: {message}" if message else display, display=display, **context)
        self.display = display


class HypothesisViolation(ConstraintViolation):
    code = "hypothesis_violation"


class ConfigInvalid(RWREError):
    code = "config_invalid"
    module = "cli_reporting"

    def __init__(self, field, reason, **context):
        super().__init__(f"{field}: {reason}", field=field, reason=reason, **context)
        self.field = field
        self.reason = reason


class MissingManifest(RWREError):
    code = "missing_manifest"
    module = "cli_reporting"
