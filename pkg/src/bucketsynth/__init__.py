"""Anonymous synthetic tabular data from trees of noisy, suppressed buckets."""

from .anon import AnonParams
from .forest import BuildParams, Forest, build_forest
from .harvest import RefinedBucket, harvest
from .microdata import generate, seeded_rng
from .schema import ColumnMeta, Kind, Table, make_table, read_csv, write_csv
from .snapping import SnappedRange
from .synthesizer import SynthesisResult, synthesize

__all__ = [
    "AnonParams",
    "BuildParams",
    "ColumnMeta",
    "Forest",
    "Kind",
    "RefinedBucket",
    "SnappedRange",
    "SynthesisResult",
    "Table",
    "build_forest",
    "generate",
    "harvest",
    "make_table",
    "read_csv",
    "seeded_rng",
    "synthesize",
    "write_csv",
]
