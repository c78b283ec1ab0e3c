"""Pipeline assembly: flag settings map to the fixed transformation order.

The order is: operator inlining (with aggregate-into-join fusion), singleton
map collapsing, constant-size-array promotion, a cleanup composite, then the
flag-gated domain phases (partitioning+date indices, hash-map lowering, string
dictionaries, column layout, data-structure init hoisting), lowering to the C
level, allocation hoisting (which needs the C level), and a final cleanup plus
the remaining fine-grained rewrites. The cleanup composite (scalar replacement,
DCE, partial evaluation, let-binding removal to a fixpoint) re-runs after each
structure-changing phase.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields as dc_fields

from . import transform as tr
from .backend.lower import lower_to_c_level
from .passes import (AllocationHoistingPass, ColumnLayoutPass, DateIndexPass,
                     DsInitHoistingPass, FineGrainedPass, MultiMapLoweringPass,
                     PartitioningPass, SingletonMapPass, StringDictionaryPass,
                     UnusedFieldRemovalPass)


@dataclass
class Settings:
    partitioning: bool = False
    hash_map_lowering: bool = False
    string_dictionary: bool = False
    column_store: bool = False
    ds_code_motion: bool = False
    date_indices: bool = False
    unused_fields: bool = False
    fine_grained: bool = False
    fuse_agg_joins: bool = True
    max_1d_slots: int = 1 << 26
    size_factor: float = 1.0
    dict_overrides: dict = field(default_factory=dict)

    @classmethod
    def none(cls):
        return cls(fuse_agg_joins=False)

    @classmethod
    def all(cls, **kw):
        s = cls(partitioning=True, hash_map_lowering=True,
                string_dictionary=True, column_store=True,
                ds_code_motion=True, date_indices=True, unused_fields=True,
                fine_grained=True)
        for k, v in kw.items():
            setattr(s, k, v)
        return s

    def flags(self):
        return {f.name: getattr(self, f.name) for f in dc_fields(self)
                if f.type == "bool" or isinstance(getattr(self, f.name), bool)}


def build_pipeline(settings, catalog, lower=True):
    """The transformer sequence for a flag configuration (pure function)."""
    composite = tr.composite_transformer
    p = []
    p.append(SingletonMapPass())
    if settings.fine_grained:
        p.append(FineGrainedPass(kinds=("array_to_locals",)))
    p.append(tr.cse_transformer())
    p.append(composite())
    if settings.unused_fields:
        p.append(UnusedFieldRemovalPass(catalog))
    if settings.partitioning or settings.date_indices:
        if settings.partitioning:
            p.append(PartitioningPass(catalog, settings.max_1d_slots))
        if settings.date_indices:
            p.append(DateIndexPass(catalog))
        p.append(composite())
    if settings.hash_map_lowering:
        p.append(MultiMapLoweringPass(catalog, settings))
    if settings.string_dictionary:
        p.append(StringDictionaryPass(catalog, settings.dict_overrides))
    if settings.column_store:
        p.append(ColumnLayoutPass())
        p.append(composite())
    if settings.ds_code_motion:
        p.append(DsInitHoistingPass(catalog, settings))
        p.append(composite())
    if lower:
        p.append(tr.FunctionTransformer(
            "lower-to-c", lambda prog: lower_to_c_level(prog)))
        if settings.ds_code_motion:
            p.append(AllocationHoistingPass(catalog, settings.size_factor))
        p.append(tr.cse_transformer())
        p.append(composite())
        if settings.fine_grained:
            p.append(FineGrainedPass(kinds=("bool_and_strength",
                                            "loop_tiling")))
        p.append(tr.FunctionTransformer("prune-inputs", tr.prune_unused_inputs))
    return p


def compile_plan(plan_tree, catalog, settings, query_name="query",
                 lower=True, trace_dir=None, diagnostics=None, stages=None):
    """Plan to final Program through the configured pipeline."""
    from . import inline
    from . import plan as pl

    tree = plan_tree
    if settings.fuse_agg_joins:
        tree = inline.fuse_agg_into_join(tree)
    program = inline.inline_plan(tree, catalog, query_name)
    pipeline = build_pipeline(settings, catalog, lower=lower)
    if stages is not None:
        pipeline = pipeline[:stages]
    program = tr.run_pipeline(program, pipeline, trace_dir=trace_dir,
                              diagnostics=diagnostics)
    return program


def naive_program(plan_tree, catalog, query_name="query", lower=False):
    """The reference path: plain inlining, no optimizations."""
    from . import inline
    program = inline.inline_plan(plan_tree, catalog, query_name)
    if lower:
        program = lower_to_c_level(program)
    return program
