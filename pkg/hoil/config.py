import os
from dotenv import load_dotenv
load_dotenv()
class AppConfig:
    def __init__(self):
        self.VERBOSE_LOGGING = os.getenv("VERBOSE_LOGGING", "true").lower() == "true"
        self.DEBUG_LOGGING = os.getenv("DEBUG_LOGGING", "false").lower() == "true"
        self.ETC_DIR = os.path.realpath(os.path.expanduser(os.getenv("ETC_DIR", "etc/")))
        self.HOIL_WORKERS = int(os.getenv("HOIL_WORKERS", "4"))
        if self.HOIL_WORKERS < 1:
            raise ValueError("HOIL_WORKERS must be at least 1")

        # Overrides RunConfig.seed when set.
        self.reload_seed()
    def set_param(self, name: str, value):
        setattr(self, name, value)
    def reload_seed(self):
        seed_str = os.getenv("HOIL_SEED", "").strip()
        self.HOIL_SEED = int(seed_str) if seed_str else None
config = AppConfig()
