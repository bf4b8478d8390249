"""
Smoke tests: every module imports, every command is registered and the experiment script is runnable
"""
import importlib
import os
from pathlib import Path

import pytest

from commands import COMMANDS

ROOT = Path(__file__).parent

MODULES = ['artifact_manager', 'cli', 'components', 'construct', 'eglue', 'errors', 'field_io', 'fields',
           'report_utils', 'shglue', 'solver_config', 'tower', 'utils', 'visualization', 'windows']


@pytest.mark.parametrize('name', MODULES)
def test_module_imports(name):
    """Test that each module imports cleanly"""
    assert importlib.import_module(name) is not None


def test_commands_registered():
    """Test that all six commands expose run()"""
    assert sorted(COMMANDS) == ['construct', 'glue', 'ledger', 'shglue', 'towers', 'windows']
    for module in COMMANDS.values():
        assert callable(module.run)


def test_cli_lists_commands():
    """Test that the typer app carries one command per module"""
    from cli import app
    names = {c.name or c.callback.__name__ for c in app.registered_commands}
    assert names == set(COMMANDS)


def test_experiment_script_is_executable():
    """Test that run_experiments.sh exists and can be executed"""
    script = ROOT / 'run_experiments.sh'
    assert script.exists()
    assert os.access(script, os.X_OK)
