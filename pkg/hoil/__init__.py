from .config import config


def run(argv=None) -> int:
    from hoil.controllers.cli import main
    return main(argv)
