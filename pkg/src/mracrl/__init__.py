"""Two-loop control toolkit: an adaptive inner loop that keeps a plant tracking
the nominal reference model a simulation-trained policy was optimized on, plus
the moving-platform quadrotor landing benchmark used to evaluate it."""

__version__ = "0.1.0"
