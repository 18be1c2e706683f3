"""Dental age and gender estimation with per-tooth tree ensembles.

Subpackages and modules:

* ``data``        long/wide measurement tables, TCI and age bins
* ``learn``       CART, random forest, extra trees, gradient boosting, AdaBoost
* ``fusion``      decision profiles, majority voting and soft combiners
* ``evaluation``  stratified splits, F1, one-vs-rest AUC, grid search
* ``explain``     TreeSHAP attributions and importance summaries
* ``synth``       seeded synthetic cohorts
* ``pipeline``    the train/evaluate workflow behind the CLI
"""

__version__ = "0.1.0"
