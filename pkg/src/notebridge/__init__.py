"""NoteBridge: collaborative block note-taking with emoji annotations.

A convergent replicated document engine, a sync server with durable op
logs, class/document storage, usage analytics, and a deterministic
simulation harness, plus the operator CLI tying them together.
"""

__version__ = "0.1.0"
