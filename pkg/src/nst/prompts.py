"""Prompt templates for the external critic/builder adapter.

The builder prompt embeds a compact grammar reference so replies come
back as parseable equation text instead of free-form code.  Three modes:
standard, parsimonious (asks for the smallest adequate model), and
domain-augmented (names the asset and trading period so the critic can
bring domain priors to bear).
"""

from __future__ import annotations

from dataclasses import dataclass

GRAMMAR_REFERENCE = """\
Write the model in this exact grammar, nothing else in the code block:

    param <name> = <value>        # one line per parameter
    dV = <drift> dt + <diffusion> dW
    dS = <drift> dt + <diffusion> dW2   # optional second equation

Expressions may use + - * / ^, the functions sqrt, exp, log, sin, cos,
tanh, abs, max, min, the state variables (V, and the second equation's
name if present), and time t.  An optional jump term is written
`+ jump(intensity, mean, std)` after the diffusion term.  At most two
equations, at most 12 parameters, and the first equation must define V.
"""

CRITIC_STANDARD = """\
You are evaluating a stochastic differential equation model fitted to a
price series.  The chart shows the historical data in black and
simulated paths from the fitted model in color, both normalized to
[0, 1].  The fitted models so far are listed below, newest last.

Describe, in a short paragraph, what structure in the data the current
model fails to capture: trend, reversion toward a level, periodic
movement, volatility that depends on the level, or sudden jumps.  Be
specific about which one matters most.
"""

BUILDER_STANDARD = """\
You are revising a stochastic differential equation model for a price
series, guided by the critique below.  Propose a revised model that
addresses the critique by adding or changing at most one or two terms.

{grammar}
Reply with one fenced code block containing only the revised model,
followed by one sentence of rationale.
"""

PARSIMONY_CLAUSE = """\
Keep the model as small as possible: prefer removing or simplifying
terms over adding them, and never keep a term whose fitted parameter is
negligible.
"""

DOMAIN_CLAUSE = """\
The series is {domain}.  Use what you know about how such a series
behaves over that period when judging the model.
"""

CALIBRATION_PROMPT = """\
The chart shows a price series in black, normalized to [0, 1].  Suggest
numeric parameter values for this model so its simulated paths would
resemble the data:

{model}
Reply with one `name = value` line per parameter and nothing else.
"""


@dataclass(frozen=True)
class PromptTemplate:
    """Critic/builder/calibration instruction texts for one run."""

    critic: str
    builder: str
    calibration: str = CALIBRATION_PROMPT
    mode: str = "standard"
    domain: str | None = None


def default_template(mode: str = "standard", domain: str | None = None) -> PromptTemplate:
    """Template for ``mode`` ("standard" or "parsimonious"), optionally
    augmented with an asset/period description."""
    if mode not in ("standard", "parsimonious"):
        raise ValueError(f"unknown prompt mode {mode!r}")
    critic = CRITIC_STANDARD
    builder = BUILDER_STANDARD.format(grammar=GRAMMAR_REFERENCE)
    if mode == "parsimonious":
        critic = critic + "\n" + PARSIMONY_CLAUSE
        builder = builder + "\n" + PARSIMONY_CLAUSE
    if domain:
        clause = DOMAIN_CLAUSE.format(domain=domain)
        critic = critic + "\n" + clause
        builder = builder + "\n" + clause
    return PromptTemplate(critic=critic, builder=builder, mode=mode, domain=domain)
