"""PENCIL: iterative chain-of-thought generation with a reduction rule.

The toolkit covers the full pipeline around the reduction rule
``C [CALL] T [SEP] A [RETURN]  =>  C A``:

- :mod:`pencil.core` — tokens, vocabularies, (de)tokenization;
- :mod:`pencil.reduction` — the rule itself, the generate/reduce loop,
  iteration splitting and the attention-cost model;
- :mod:`pencil.sat`, :mod:`pencil.qbf`, :mod:`pencil.puzzle` — deterministic
  trace generators with brute-force oracles;
- :mod:`pencil.turing` — Turing machines as token-per-step autoregressive
  machines, with state-function summarization;
- :mod:`pencil.fasp` — an exact-rational interpreter for average-hard-attention
  sequence programs, plus the machine-simulation program;
- :mod:`pencil.tasks` — one dispatch surface over the three task families;
- :mod:`pencil.datasets` — training-example extraction and corpus export;
- :mod:`pencil.cli` — the ``pencil`` command-line interface.
"""

__version__ = "0.1.0"
