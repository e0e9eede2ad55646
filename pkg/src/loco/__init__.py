"""Learning to localize instantaneous events from occurrence counts.

Submodules: ``pbd`` (count distribution), ``loss`` (batch loss and
initialization), ``rnn`` (GRU model, BPTT, Adam), ``synth`` (data),
``hilbert`` (image serialization), ``evaluation`` (decoding and scoring),
``train``, ``checkpoint``, ``dataset``, ``config``, ``props`` and ``cli``.
"""

__version__ = "0.1.0"
