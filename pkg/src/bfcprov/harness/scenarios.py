"""Scenario configuration files: loading, merging and overrides."""
from __future__ import annotations

import copy
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import yaml

from ..catalog import Catalog, InstanceSize, ProfileEntry, UseCase
from ..environment import Scenario
from ..topology import build_infrastructure

BUILTIN = ("ehr", "ml-share", "streaming")

# short override names -> location in the config tree
ALIASES = {
    "T": "simulation.idle_timeout",
    "idle_timeout": "simulation.idle_timeout",
    "burst_sigma": "simulation.burst_sigma",
    "exponent": "simulation.overload_exponent",
    "overload_exponent": "simulation.overload_exponent",
    "discovery_penalty": "simulation.discovery_penalty",
    "ticks_per_level": "simulation.ticks_per_level",
    "max_slots": "simulation.max_slots",
    "grace_ticks": "simulation.grace_ticks",
    "invalid_penalty": "simulation.invalid_penalty",
    "schedule": "scenario.client_schedule",
    "client_schedule": "scenario.client_schedule",
    "session_size": "scenario.session_size",
    "max_sessions": "scenario.max_sessions",
}


class UnknownScenario(KeyError):
    pass


def _read_yaml(text: str) -> dict:
    data = yaml.safe_load(text) or {}
    if not isinstance(data, dict):
        raise ValueError("scenario config must be a mapping at the top level")
    return data


def _builtin_text(name: str) -> str:
    return resources.files("bfcprov.configs").joinpath(name).read_text(encoding="utf-8")


def merge(base: dict, extra: Mapping) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, Mapping) and isinstance(out.get(k), dict):
            out[k] = merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def raw_config(name_or_path: str | Path) -> dict:
    """Defaults merged with a built-in scenario or a YAML file on disk."""
    defaults = _read_yaml(_builtin_text("defaults.yaml"))
    key = str(name_or_path)
    if key in BUILTIN:
        return merge(defaults, _read_yaml(_builtin_text(f"{key}.yaml")))
    path = Path(key)
    if path.suffix in (".yaml", ".yml") and path.exists():
        return merge(defaults, _read_yaml(path.read_text(encoding="utf-8")))
    raise UnknownScenario(key)


def parse_override(text: str) -> tuple[str, Any]:
    if "=" not in text:
        raise ValueError(f"override must look like key=value, got {text!r}")
    key, value = text.split("=", 1)
    return key.strip(), yaml.safe_load(value)


def apply_overrides(raw: dict, overrides: Mapping[str, Any]) -> dict:
    out = copy.deepcopy(raw)
    uc_name = out["scenario"]["use_case"]
    for key, value in overrides.items():
        if key in ("alpha", "beta", "delay_bound"):
            path = f"use_cases.{uc_name}.{key}"
        else:
            path = ALIASES.get(key, key)
        node = out
        parts = path.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = value
    return out


def scenario_from_config(raw: Mapping) -> Scenario:
    graph = build_infrastructure(raw["clusters"], raw.get("links", []))
    sizes = {kind: {label: InstanceSize(label, float(v["cpu_capacity"]),
                                        float(v["base_processing_delay"]))
                    for label, v in by_size.items()}
             for kind, by_size in raw["catalog"].items()}
    profile = {}
    for uc, by_kind in raw.get("profiles", {}).items():
        for kind, entry in by_kind.items():
            profile[(kind, uc)] = ProfileEntry(float(entry["baseline_load"]),
                                               float(entry["per_client_load"]))
    catalog = Catalog(sizes, profile)
    sc = raw["scenario"]
    ucs = raw["use_cases"]
    if sc["use_case"] not in ucs:
        raise ValueError(f"use case {sc['use_case']} not defined")
    u = ucs[sc["use_case"]]
    use_case = UseCase(sc["use_case"], float(u["alpha"]), float(u["beta"]),
                       float(u["delay_bound"]), tuple(u.get("send_rate_kbps", (100, 200))))
    sim = raw.get("simulation", {})
    kw = {k: sim[k] for k in ("ticks_per_level", "idle_timeout", "burst_sigma",
                              "discovery_penalty", "overload_exponent", "max_slots",
                              "grace_ticks", "invalid_penalty") if k in sim}
    for k in ("session_size", "max_sessions", "seed"):
        if k in sc:
            kw[k] = sc[k]
    return Scenario(
        name=raw.get("name", "custom"),
        graph=graph,
        catalog=catalog,
        use_case=use_case,
        chain=tuple(sc["chain"]),
        client_schedule=tuple(int(c) for c in sc["client_schedule"]),
        ingress=int(sc.get("ingress", graph.cluster_ids[0])),
        egress=sc.get("egress"),
        description=raw.get("description", ""),
        **kw,
    )


def load_scenario(name_or_path: str | Path, overrides: Mapping[str, Any] | None = None) -> Scenario:
    raw = raw_config(name_or_path)
    if overrides:
        raw = apply_overrides(raw, overrides)
    return scenario_from_config(raw)


def builtin_scenario(name: str, **overrides) -> Scenario:
    if name not in BUILTIN:
        raise UnknownScenario(name)
    return load_scenario(name, overrides)
