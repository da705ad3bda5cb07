# Copyright 2026 The cssmamba Authors
# SPDX-License-Identifier: Apache-2.0
"""Cluster-guided spatial-spectral Mamba classifier for hyperspectral images."""

from ._core import (
    ContractError,
    Dataset,
    DatasetError,
    FormatError,
    IndexRangeError,
    NumericError,
    ShapeError,
    Trainer,
    assign_nearest,
    cluster_loss,
    generate_synthetic,
    load_container,
    make_splits,
    metrics_from_confusion,
    nearest_mean_baseline,
    normalize_bands,
    parse_config,
    save_container,
    selective_scan,
    soft_assign,
    train,
)

__all__ = [
    "ContractError",
    "Dataset",
    "DatasetError",
    "FormatError",
    "IndexRangeError",
    "NumericError",
    "ShapeError",
    "Trainer",
    "assign_nearest",
    "cluster_loss",
    "generate_synthetic",
    "load_container",
    "make_splits",
    "metrics_from_confusion",
    "nearest_mean_baseline",
    "normalize_bands",
    "parse_config",
    "save_container",
    "selective_scan",
    "soft_assign",
    "train",
]
