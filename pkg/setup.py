"""
Install the PUAL toolkit's dependencies from requirements.txt
"""

import subprocess
import sys

if __name__ == "__main__" and len(sys.argv) > 1:
    # Invoked by a build backend (pip install .): package metadata lives in pyproject.toml
    from setuptools import setup

    setup()
elif __name__ == "__main__":
    status = subprocess.call([sys.executable, "-m", "pip", "install", "-r", "requirements.txt"])
    if status == 0:
        print("Installed. Run 'python -m pytest' to check, then 'python cli.py --help'.")
    else:
        print("pip failed; install manually with: pip install -r requirements.txt")
    sys.exit(status)
