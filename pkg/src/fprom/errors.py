"""Exception types shared across the toolkit.

The CLI maps these onto process exit codes, so anything user-facing
should raise one of them rather than a bare exception.
"""


class InputDataError(ValueError):
    """Malformed or unreadable user input (files, config, CLI arguments)."""


class InfeasibleConfigError(ValueError):
    """A configuration that can never run: bad bounds, unstable dt,
    record times off the step lattice, negative diffusion without the
    override flag, and similar."""


class SolverDivergenceError(RuntimeError):
    """A numerical computation blew up (non-finite state, vanished mass)."""
