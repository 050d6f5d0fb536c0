"""Federated multimodal threat detection on synthetic data.

Submodules:

* :mod:`fedthreat.params` - logistic detector loss, gradient, SGD, LR schedule
* :mod:`fedthreat.fusion` - stub extractors and weighted-sum fusion
* :mod:`fedthreat.privacy` - clipping, Gaussian perturbation, epsilon report
* :mod:`fedthreat.federation` - clients, server, aggregation, wire protocol
* :mod:`fedthreat.evalgen` - synthetic data, partitioning, detection metrics
* :mod:`fedthreat.runner` - experiment configs, runs, sweeps, CLI
"""

__version__ = "0.1.0"
