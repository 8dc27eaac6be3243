"""Object-conditioned bag of instances: few-shot instance recognition
on frozen detector features via multi-order statistical embeddings.
"""

from .bag import (
    Classification,
    InstanceBag,
    add_instance,
    build_bag,
    build_bag_from_dataset,
    classify,
    classify_batch,
    embed_sample,
    load_bag,
    save_bag,
    simpleshot_transform,
)
from .episodes import (
    Episode,
    balance_dataset,
    make_split,
    select_instances,
    split_1s1s,
    split_1sas,
    split_kshot,
)
from .errors import OboiError
from .metrics import (
    MetricsReport,
    aggregate_metrics,
    embed_split,
    evaluate,
    relative_gain,
    report_table,
)
from .model import (
    BoundingBox,
    HeadConfig,
    LabelSpace,
    ReductionConfig,
    Sample,
    instance_to_object,
    validate_label_space,
)
from .reduction import (
    apply_standardizer,
    build_mask,
    central_moments,
    reduce_features,
    standardizer_fit,
)
from .synthetic import SyntheticSpec, gen_synthetic, load_spec
from .tensorstore import (
    Dataset,
    load_dataset,
    read_tensor,
    read_tensor_header,
    validate_dataset,
    write_tensor,
)

__version__ = "0.1.0"

__all__ = [
    "BoundingBox",
    "Classification",
    "Dataset",
    "Episode",
    "HeadConfig",
    "InstanceBag",
    "LabelSpace",
    "MetricsReport",
    "OboiError",
    "ReductionConfig",
    "Sample",
    "SyntheticSpec",
    "add_instance",
    "aggregate_metrics",
    "apply_standardizer",
    "balance_dataset",
    "build_bag",
    "build_bag_from_dataset",
    "build_mask",
    "central_moments",
    "classify",
    "classify_batch",
    "embed_sample",
    "embed_split",
    "evaluate",
    "gen_synthetic",
    "instance_to_object",
    "load_bag",
    "load_dataset",
    "load_spec",
    "make_split",
    "read_tensor",
    "read_tensor_header",
    "reduce_features",
    "relative_gain",
    "report_table",
    "save_bag",
    "select_instances",
    "simpleshot_transform",
    "split_1s1s",
    "split_1sas",
    "split_kshot",
    "standardizer_fit",
    "validate_dataset",
    "validate_label_space",
    "write_tensor",
]
