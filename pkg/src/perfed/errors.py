"""Exception hierarchy shared by every module.

Each class carries a short ``category`` used by the CLI to print a
single-line error and pick the exit code.
"""


class SimulationError(Exception):
    category = "error"


class ConfigError(SimulationError):
    """Invalid configuration value, infeasible sizes, bad menus."""

    category = "config"


class ContractError(SimulationError):
    """A caller violated an operation precondition."""

    category = "contract"


class NumericDivergenceError(SimulationError):
    """Training produced NaN/Inf loss or parameters."""

    category = "numeric"


class PartitionInfeasibleError(ConfigError):
    """Not enough remaining samples of a required class."""

    category = "partition"


class DispatchInfeasibleError(SimulationError):
    """A client requested more samples than the center pool holds."""

    category = "dispatch"


class UndefinedBaselineError(ContractError):
    """Relative accuracy requested against a zero local baseline."""

    category = "baseline"
