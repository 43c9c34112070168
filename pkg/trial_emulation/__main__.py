"""python -m trial_emulation"""

from trial_emulation.cli.main import main

if __name__ == "__main__":
    main()
