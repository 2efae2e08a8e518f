from .cache import RunIndex
from .orchestrator import cmd_check_cp, cmd_evolve, cmd_scan, cmd_simulate, cmd_validate, run_status

__all__ = ["RunIndex", "cmd_evolve", "cmd_check_cp", "cmd_scan", "cmd_simulate", "cmd_validate", "run_status"]
