from .partition import PartitioningPass, DateIndexPass
from .maps import SingletonMapPass, MultiMapLoweringPass
from .layout import ColumnLayoutPass, UnusedFieldRemovalPass
from .strings import StringDictionaryPass
from .hoist import AllocationHoistingPass, DsInitHoistingPass
from .fine import FineGrainedPass

__all__ = [
    "PartitioningPass", "DateIndexPass", "SingletonMapPass",
    "MultiMapLoweringPass", "ColumnLayoutPass", "UnusedFieldRemovalPass",
    "StringDictionaryPass", "AllocationHoistingPass", "DsInitHoistingPass",
    "FineGrainedPass",
]
