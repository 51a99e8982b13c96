from hoil.config import config

_warnings: list[str] = []
def log(message: str):
    if config.VERBOSE_LOGGING:
        print(message)
def debug(message: str):
    if config.DEBUG_LOGGING:
        print(message)
def warn(message: str):
    _warnings.append(message)
    print(f"⚠️  {message}")
def recent_warnings() -> list[str]:
    return list(_warnings)
def clear_warnings():
    _warnings.clear()
def set_verbose_logging(enabled: bool):
    config.set_param('VERBOSE_LOGGING', enabled)
    log(f"Verbose logging has been {'enabled' if enabled else 'disabled'}.")
def set_debug_logging(enabled: bool):
    config.set_param('DEBUG_LOGGING', enabled)
    log(f"Debug logging has been {'enabled' if enabled else 'disabled'}.")
