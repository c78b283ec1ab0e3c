"""planforge: a staged query-plan-to-C compiler with a reference interpreter.

The compiler takes a schema (with key annotations), a physical plan and loaded
data, inlines the plan's operators into a single high-level program, then runs
a configurable pipeline of rewrite passes that specialize data structures,
change layout, compress strings and hoist work out of the per-tuple path,
before lowering to a C-like form and emitting C text.
"""

__version__ = "0.1.0"
