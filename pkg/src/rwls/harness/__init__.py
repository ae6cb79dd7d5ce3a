"""Monte Carlo campaigns, statistical tests and the command-line interface."""
