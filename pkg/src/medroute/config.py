"""Gateway configuration: one YAML file mapping onto GatewayConfig.

Schema (see config/gateway.example.yaml for a complete reference):

    listen: "127.0.0.1:8080"
    state_dir: var/sessions            # optional; omit for memory-only sessions
    scorer:
      kind: builtin_linear             # or: remote
      model_artifact_path: models/scorer.json
      # remote_endpoint: http://...    # required for kind: remote
      # api_token: ${SCORER_TOKEN}
    strategy:
      kind: top_n                      # or: threshold
      n: 2                             # tau: 0.15 for threshold
    orchestrator:
      endpoint: http://127.0.0.1:9100
      model_id: synthesizer
      # synthesis_prompt_template, timeout_ms, max_tokens, temperature,
      # single_specialist_passthrough, retries, api_token
    reformulator:
      endpoint: http://127.0.0.1:9100
      model_id: synthesizer
      # history_window, timeout_ms, max_tokens, temperature, api_token
    specialists:                       # exactly one entry per registry label id
      cardiology_hematology:
        endpoint: http://127.0.0.1:9001
        model_id: cardio-1b
        # system_prompt_template, timeout_ms, max_tokens, temperature, api_token
      ...

`${VAR}` placeholders in endpoint and token values are resolved from the
environment at load time; an unset variable is a configuration error.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass

import yaml

from .core import Strategy, default_label_registry, label_by_id
from .errors import ConfigurationError, InvalidInputError
from .conversation import ReformulatorConfig
from .orchestrator import OrchestratorConfig
from .router import ScorerSpec
from .specialists import SpecialistConfig

_ENV_RE = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")
_SUBSTITUTED_KEYS = {"endpoint", "remote_endpoint", "api_token"}


@dataclass(frozen=True)
class GatewayConfig:
    listen: str
    scorer: ScorerSpec
    strategy: Strategy
    specialists: dict[str, SpecialistConfig]
    orchestrator: OrchestratorConfig
    reformulator: ReformulatorConfig
    state_dir: str | None = None

    @property
    def host(self) -> str:
        return self.listen.rsplit(":", 1)[0]

    @property
    def port(self) -> int:
        return int(self.listen.rsplit(":", 1)[1])


def _resolve_env(value: str, context: str) -> str:
    def repl(match: re.Match) -> str:
        name = match.group(1)
        resolved = os.environ.get(name)
        if resolved is None:
            raise ConfigurationError(f"{context}: environment variable {name!r} is not set")
        return resolved

    return _ENV_RE.sub(repl, value)


def _substitute(node, context: str):
    if isinstance(node, dict):
        return {
            key: (
                _resolve_env(val, f"{context}.{key}")
                if key in _SUBSTITUTED_KEYS and isinstance(val, str)
                else _substitute(val, f"{context}.{key}")
            )
            for key, val in node.items()
        }
    if isinstance(node, list):
        return [_substitute(item, context) for item in node]
    return node


def _require(mapping: dict, key: str, context: str):
    if key not in mapping:
        raise ConfigurationError(f"{context}: missing required key {key!r}")
    return mapping[key]


def _strategy_from(raw: dict) -> Strategy:
    kind = _require(raw, "kind", "strategy")
    if kind == "top_n":
        n = _require(raw, "n", "strategy")
        if not isinstance(n, int) or not 1 <= n <= 10:
            raise ConfigurationError(f"strategy.n must be an integer in [1, 10], got {n!r}")
        return Strategy.top_n(n)
    if kind == "threshold":
        tau = _require(raw, "tau", "strategy")
        if not isinstance(tau, (int, float)) or not 0.0 < float(tau) < 1.0:
            raise ConfigurationError(f"strategy.tau must lie in (0, 1), got {tau!r}")
        return Strategy.threshold(float(tau))
    raise ConfigurationError(f"strategy.kind must be top_n or threshold, got {kind!r}")


def load_config(path) -> GatewayConfig:
    """Parse and validate a gateway config file; all invariants checked here."""
    with open(path, encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, dict):
        raise ConfigurationError(f"{path}: config root must be a mapping")
    raw = _substitute(raw, "config")

    listen = _require(raw, "listen", "config")
    if not re.fullmatch(r"[^\s:]+:\d+", str(listen)):
        raise ConfigurationError(f"listen must look like host:port, got {listen!r}")

    try:
        scorer = ScorerSpec(**_require(raw, "scorer", "config"))
    except (TypeError, InvalidInputError) as exc:
        raise ConfigurationError(f"scorer: {exc}") from exc

    strategy = _strategy_from(_require(raw, "strategy", "config"))

    specialists_raw = _require(raw, "specialists", "config")
    if not isinstance(specialists_raw, dict):
        raise ConfigurationError("specialists must be a mapping keyed by label id")
    specialists: dict[str, SpecialistConfig] = {}
    for label in default_label_registry():
        if label.id not in specialists_raw:
            raise ConfigurationError(f"specialists: missing entry for label {label.id!r}")
    for label_id, entry in specialists_raw.items():
        try:
            specialty = label_by_id(label_id)
        except InvalidInputError as exc:
            raise ConfigurationError(f"specialists: {exc}") from exc
        try:
            specialists[label_id] = SpecialistConfig(specialty=specialty, **entry)
        except (TypeError, ConfigurationError) as exc:
            raise ConfigurationError(f"specialists.{label_id}: {exc}") from exc

    try:
        orchestrator = OrchestratorConfig(**_require(raw, "orchestrator", "config"))
    except (TypeError, ConfigurationError) as exc:
        raise ConfigurationError(f"orchestrator: {exc}") from exc
    try:
        reformulator = ReformulatorConfig(**_require(raw, "reformulator", "config"))
    except (TypeError, ConfigurationError) as exc:
        raise ConfigurationError(f"reformulator: {exc}") from exc

    return GatewayConfig(
        listen=str(listen),
        scorer=scorer,
        strategy=strategy,
        specialists=specialists,
        orchestrator=orchestrator,
        reformulator=reformulator,
        state_dir=raw.get("state_dir"),
    )
