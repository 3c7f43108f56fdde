# Copyright 2026 The ncadiff Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""NCA-based diffusion segmentation: Python bindings to the C++ engine."""

from ._core import (
    ArgumentError,
    CheckpointError,
    ConfigError,
    DataError,
    Error,
    Model,
    ShapeError,
    dice_iou,
    gradcheck,
    parameter_count,
    run_cli,
    schedule,
    synth_dataset,
)

__all__ = [
    "ArgumentError",
    "CheckpointError",
    "ConfigError",
    "DataError",
    "Error",
    "Model",
    "ShapeError",
    "dice_iou",
    "gradcheck",
    "parameter_count",
    "run_cli",
    "schedule",
    "synth_dataset",
]

__version__ = "0.1.0"
