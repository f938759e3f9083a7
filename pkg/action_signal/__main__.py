"""Entry point for running action-signal as a module."""

from action_signal.cli import run

if __name__ == "__main__":
    run()
