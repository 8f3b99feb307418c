"""Entry point for running granular_stereo as a module."""

from granular_stereo.main import run

if __name__ == "__main__":
    run()
