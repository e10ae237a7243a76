# Copyright (c) 2026 The kronlora Authors
# SPDX-License-Identifier: Apache-2.0
"""Python front end for the kronlora adapter library.

Planning, checkpoint I/O and the CLI commands are exposed directly; command
reports come back as plain dictionaries with the same layout as the CLI's
--json output.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Any, Optional

from . import _core
from ._core import (
    AdapterKind,
    AdapterPlan,
    ConfigError,
    CorruptionError,
    DivergenceError,
    FormatError,
    IoError,
    KronloraError,
    PlanningError,
    ShapeError,
    StateError,
    expand_delta,
    init_tensors,
    load_checkpoint,
    parameter_names,
    parse_adapter_kind,
    plan_kron_lora,
    plan_krona,
    plan_lora,
    save_checkpoint,
)

__version__ = _core.__version__

__all__ = [
    "AdapterKind",
    "AdapterPlan",
    "ConfigError",
    "CorruptionError",
    "DivergenceError",
    "FormatError",
    "IoError",
    "KronloraError",
    "PlanningError",
    "ShapeError",
    "StateError",
    "bench",
    "expand_delta",
    "init_tensors",
    "load_checkpoint",
    "parameter_names",
    "parse_adapter_kind",
    "plan",
    "plan_dict",
    "plan_kron_lora",
    "plan_krona",
    "plan_lora",
    "save_checkpoint",
    "sequential",
    "strip_volatile",
    "train",
    "verify",
]


def _config_text(config: "str | os.PathLike[str] | dict[str, Any]") -> str:
    if isinstance(config, dict):
        return "".join(f"{k} = {v}\n" for k, v in config.items())
    return Path(config).read_text()


def plan_dict(plan: AdapterPlan) -> dict[str, Any]:
    return json.loads(plan._json())


def verify(seed: int = 0, trials: int = 200, sabotage: bool = False,
           suite: Optional[str] = None) -> tuple[int, dict[str, Any]]:
    """Returns (exit_code, report)."""
    code, text = _core.verify_json(seed, trials, sabotage, suite)
    return code, json.loads(text)


def plan(d_in: int, d_out: int, r: int = 8, *, seed: int = 0, target_slice: int = 200,
         a2: Optional[int] = None, vocab: bool = False) -> dict[str, Any]:
    return json.loads(_core.plan_json(d_in, d_out, r, seed, target_slice, a2, vocab))


def bench(d_in: int = 4096, d_out: int = 4096, r: int = 8, batch: int = 8, repeats: int = 5,
          seed: int = 0) -> dict[str, Any]:
    return json.loads(_core.bench_json(d_in, d_out, r, batch, repeats, seed))


def train(config, seed: int = 0, out: "Optional[os.PathLike[str] | str]" = None) -> dict[str, Any]:
    """`config` is a path to a key-value file or a dict of keys."""
    return json.loads(_core.train_json(_config_text(config), seed, None if out is None else Path(out)))


def sequential(config, seed: int = 0, out: "Optional[os.PathLike[str] | str]" = None) -> dict[str, Any]:
    return json.loads(_core.sequential_json(_config_text(config), seed, None if out is None else Path(out)))


def strip_volatile(report: dict[str, Any]) -> dict[str, Any]:
    return json.loads(_core.strip_volatile_json(json.dumps(report)))
