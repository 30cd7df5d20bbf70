"""Name-dialing domain: synthetic personnel directory, 14-action template set
with two API calls, entity logic and action mask, and the parameterized user
simulator that drives reinforcement learning."""
