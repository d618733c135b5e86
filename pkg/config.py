from dotenv import load_dotenv
import os

load_dotenv()


def _int_or_none(name):
    value = os.getenv(name)
    if value is None or value.strip() == "":
        return None
    return int(value, 0)


# Master seed used when a command gets no --seed flag
DEFAULT_SEED = _int_or_none("GLVR_SEED")

LOG_LEVEL = os.getenv("GLVR_LOG_LEVEL", "INFO").upper()
LOG_FILE = os.getenv("GLVR_LOG_FILE") or None
LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

PROGRESS_EVERY = int(os.getenv("GLVR_PROGRESS_EVERY", "1000"))
DEFAULT_JOBS = int(os.getenv("GLVR_JOBS", "1"))
