"""
Exception hierarchy for disqsim
Every error carries the process exit code the CLI reports for it
"""

from typing import List, Optional, Sequence

EXIT_INPUT = 2
EXIT_CAPACITY = 3
EXIT_INTERNAL = 4


class DisqSimError(Exception):
    """Base exception for all pipeline errors"""

    exit_code = EXIT_INTERNAL

    def __init__(self, message: str, exit_code: Optional[int] = None, stage: Optional[str] = None):
        self.message = message
        if exit_code is not None:
            self.exit_code = exit_code
        self.stage = stage
        super().__init__(message)

    def __str__(self) -> str:
        if self.stage:
            return f"{self.stage}: {self.message}"
        return self.message


class InputError(DisqSimError):
    exit_code = EXIT_INPUT


class ConfigError(InputError):
    pass


class CircuitParseError(InputError):
    """Malformed circuit source; line and column are 1-based when known"""

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"line {line}, column {column}: {message}"
        super().__init__(message)


class ArchitectureError(InputError):
    pass


class BenchmarkError(InputError):
    pass


class SimulationLimitError(InputError):
    pass


class CapacityError(DisqSimError):
    exit_code = EXIT_CAPACITY


class RoutingError(DisqSimError):
    exit_code = EXIT_CAPACITY


class InvariantError(DisqSimError):
    exit_code = EXIT_INTERNAL


class IsolationError(InvariantError):
    pass


class NoiseAssignmentError(InvariantError):
    pass


class CycleError(InvariantError):
    def __init__(self, cycle: Sequence[tuple]):
        self.cycle = list(cycle)
        edges = ", ".join(f"{u}->{v}" for u, v in self.cycle)
        super().__init__(f"dependency cycle detected: {edges}")


class DeadlockError(InvariantError):
    def __init__(self, blocked: List[str]):
        self.blocked = sorted(blocked)
        super().__init__(f"assembler deadlock, cursors blocked on: {', '.join(self.blocked)}")
