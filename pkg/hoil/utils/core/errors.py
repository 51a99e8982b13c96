class HoilError(Exception):
    exit_code = 1
class UsageError(HoilError):
    exit_code = 1
class ConfigError(HoilError):
    exit_code = 1
class DataError(HoilError):
    exit_code = 2
class NumericalError(HoilError):
    exit_code = 3
class ShapeError(ValueError):
    def __init__(self, op: str, *shapes, detail: str = ""):
        shape_str = ", ".join(str(tuple(s)) for s in shapes)
        message = f"{op}: incompatible shapes {shape_str}"
        if detail:
            message += f" ({detail})"
        super().__init__(message)
        self.op = op
        self.shapes = shapes
class ContractError(ValueError):
    """Raised when an input violates a named domain rule."""
    def __init__(self, rule: str, message: str):
        super().__init__(f"[{rule}] {message}")
        self.rule = rule
