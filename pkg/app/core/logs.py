import logging
import os
import sys
import time
from contextlib import contextmanager

logging.basicConfig(
    level=os.environ.get("HGS_LOG", "INFO").upper(),
    format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    handlers=[logging.StreamHandler(sys.stdout)],
)
log = logging.getLogger("hgs")


@contextmanager
def span(name: str, level: int = logging.INFO):
    t0 = time.perf_counter()
    log.log(level, f"[start] {name}")
    try:
        yield
        log.log(level, f"[done] {name} dt={time.perf_counter()-t0:.3f}s")
    except Exception as e:  # pragma: no cover - logging only
        log.exception(f"[fail] {name}: {e}")
        raise
