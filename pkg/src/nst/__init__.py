"""Neuro-symbolic trading toolkit.

A small language for one- and two-equation SDE models, a seeded
Euler-Maruyama simulation engine, moment-matching calibration with
forward-mode gradients, an iterative model-discovery loop (scripted or
vision-language-model driven), and a virtual market in which discovered
models trade against a price with impact.
"""

__version__ = "0.1.0"
