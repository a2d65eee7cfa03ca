"""Python bindings for the eapo C++ core."""

import json as _json

from ._eapo import (
    Classifier,
    EapoWeights,
    Error,
    FocalParams,
    __version__,
    bce,
    build_local_manifold,
    dpo,
    eapo_batch,
    finetune,
    focal,
    generate_synthetic,
    metrics_at_threshold,
    neighborhood,
    pretrain,
    roc_auc,
    select_threshold_pr,
    verify_manifest,
)
from ._eapo import run_all as _run_all


def run_all(config=None, output_dir=""):
    """Run every pipeline stage; `config` is a dict or JSON string. Returns the manifest."""
    if config is None:
        config = {}
    if not isinstance(config, str):
        config = _json.dumps(config)
    return _json.loads(_run_all(config, str(output_dir)))
