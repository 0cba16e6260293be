class ConfigError(ValueError):
    """Invalid parameter set.  ``problems`` lists every violated invariant."""

    def __init__(self, problems, where=None):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        prefix = f"{where}: " if where else ""
        super().__init__("; ".join(prefix + p for p in self.problems))


class DomainError(ValueError):
    """Argument outside the domain of a model function."""


class SimulationAbort(RuntimeError):
    """Integration produced a non-finite state."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result
