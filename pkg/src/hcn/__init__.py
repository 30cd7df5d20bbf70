"""Hybrid code network dialog policies.

An LSTM policy over a fixed inventory of action templates, combined with
developer-supplied domain code for entity tracking, action masking, context
features and API dispatch.  The policy trains with per-dialog supervised
backpropagation through time, with policy-gradient reinforcement learning,
or with an interleaved mixture of both.
"""

__version__ = "0.1.0"
