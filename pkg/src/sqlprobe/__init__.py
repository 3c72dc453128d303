"""Active disambiguation of candidate SQL programs.

Given a pool of weighted candidate programs for a natural-language request,
the package synthesizes small databases on which likely candidates disagree,
asks (human or simulated) annotators which displayed output is correct, and
maintains a Bayesian posterior over candidates until one dominates.
"""

__version__ = "0.1.0"
