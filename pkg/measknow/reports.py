"""Run reports and configuration files for the command-line tool."""

import json
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from pydantic import BaseModel, Field

from measknow.config import RunConfig


class RunReport(BaseModel):
    """What one CLI invocation computed.

    ``results`` is the command-specific body and is deterministic for a
    fixed config and seed; ``wall_time`` is the only field that is not.
    """

    command: str
    config: Dict[str, Any]
    results: Dict[str, Any] = Field(default_factory=dict)
    wall_time: float = 0.0
    violations: List[str] = Field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def body_json(self) -> str:
        return json.dumps(_jsonable(self.results), sort_keys=True)

    def to_json(self) -> str:
        return json.dumps(_jsonable(self.model_dump()), indent=2, sort_keys=True)


def _jsonable(value: Any) -> Any:
    # Non-finite floats become strings so every report is strict JSON.
    if isinstance(value, float) and not math.isfinite(value):
        return "nan" if math.isnan(value) else ("inf" if value > 0 else "-inf")
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def load_config(path: Optional[Union[str, Path]], seed: Optional[int] = None) -> RunConfig:
    """``RunConfig`` from a JSON file (defaults when ``path`` is None), seed overridden if given.

    Raises:
        FileNotFoundError, json.JSONDecodeError, pydantic.ValidationError
    """
    data: Dict[str, Any] = {}
    if path is not None:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    if seed is not None:
        data["seed"] = seed
    return RunConfig.model_validate(data)


def write_report(report: RunReport, path: Optional[Union[str, Path]] = None) -> str:
    text = report.to_json()
    if path is not None:
        Path(path).write_text(text + "\n", encoding="utf-8")
    return text


def load_report(path: Union[str, Path]) -> RunReport:
    return RunReport.model_validate_json(Path(path).read_text(encoding="utf-8"))
