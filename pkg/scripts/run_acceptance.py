"""Run the twelve acceptance criteria and print one PASS/FAIL line each."""
import subprocess
import sys
from pathlib import Path

suite = Path(__file__).resolve().parent.parent / "tests" / "test_acceptance.py"
sys.exit(subprocess.call([sys.executable, "-m", "pytest", str(suite), "-q", "-p", "no:cacheprovider"]))
