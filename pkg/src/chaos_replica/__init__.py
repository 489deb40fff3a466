"""Replicating long-term chaotic characteristics with trainable predictors.

The package trains one-step-ahead predictors (a simulated brick-wall
quantum circuit and an LSTM baseline) on logistic-map time series, with a
trainable hyper-parameter-aware pre-processing, and scores how well the
trained maps replicate bifurcation diagrams and Lyapunov exponents against
the exact dynamics.
"""

__version__ = "0.1.0"
