"""
Subcommand modules for the holoweld CLI
Each module exposes run(cfg, manager, charts) returning a CommandResult
"""

from . import run_windows
from . import run_shglue
from . import run_glue
from . import run_towers
from . import run_construct
from . import run_ledger

COMMANDS = {
    'windows': run_windows,
    'shglue': run_shglue,
    'glue': run_glue,
    'towers': run_towers,
    'construct': run_construct,
    'ledger': run_ledger,
}

__all__ = ['run_windows', 'run_shglue', 'run_glue', 'run_towers', 'run_construct', 'run_ledger', 'COMMANDS']
