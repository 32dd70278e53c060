"""Synthetic NSL-KDD-shaped connection records.

The generator gives each category a rough traffic profile (protocols,
services, flags, byte counts, error rates) with overlapping noise, plus a
small share of records drawn from another category's profile, so the four
classifiers see realistic-looking but imperfectly separable data. It is a
fixture for tests and demos, not a model of real traffic.
"""

from __future__ import annotations

from typing import Mapping

import numpy as np

from .dataset import (
    NSL_KDD_SCHEMA,
    Category,
    CategoryMap,
    LabeledDataset,
    make_record,
)

DEFAULT_MIX = {
    Category.NORMAL: 0.52,
    Category.DOS: 0.30,
    Category.PROBE: 0.10,
    Category.R2L: 0.05,
    Category.U2R: 0.03,
}

LABELS = {
    Category.NORMAL: (["normal"], [1.0]),
    Category.DOS: (["neptune", "smurf", "back", "teardrop", "pod", "land"], [0.6, 0.15, 0.1, 0.07, 0.05, 0.03]),
    Category.PROBE: (["satan", "ipsweep", "portsweep", "nmap"], [0.3, 0.3, 0.25, 0.15]),
    Category.R2L: (["warezclient", "guess_passwd", "ftp_write", "imap", "multihop"], [0.45, 0.3, 0.1, 0.1, 0.05]),
    Category.U2R: (["buffer_overflow", "rootkit", "loadmodule", "perl"], [0.5, 0.25, 0.15, 0.1]),
}

# fraction of records whose features come from a different category's profile
CROSSOVER = 0.03

_NORMAL_SERVICES = (["http", "smtp", "ftp_data", "domain_u", "private", "ftp", "telnet", "other", "ecr_i", "urp_i"],
                    [0.45, 0.12, 0.1, 0.1, 0.05, 0.04, 0.03, 0.06, 0.03, 0.02])
_PROBE_SERVICES = ["private", "other", "eco_i", "ecr_i", "http", "ftp", "telnet", "smtp", "finger", "domain"]


def _choice(rng, items, p=None):
    return items[rng.choice(len(items), p=p)]


def _rate(rng, center, spread=0.08):
    return float(np.round(np.clip(center + rng.normal(0, spread), 0.0, 1.0), 2))


def _features(rng: np.random.Generator, category: Category, label: str) -> list:
    v = {name: 0.0 for name in NSL_KDD_SCHEMA.names}
    v.update(protocol_type="tcp", service="http", flag="SF", land="0", logged_in="0",
             is_host_login="0", is_guest_login="0")
    if category is Category.NORMAL:
        v["service"] = _choice(rng, *_NORMAL_SERVICES)
        v["protocol_type"] = {"domain_u": "udp", "ecr_i": "icmp", "urp_i": "icmp"}.get(v["service"], "tcp")
        v["flag"] = _choice(rng, ["SF", "S0", "REJ", "RSTO"], [0.9, 0.04, 0.04, 0.02])
        v["duration"] = float(rng.exponential(150)) if rng.random() < 0.25 else 0.0
        v["src_bytes"] = float(np.round(rng.lognormal(5.5, 1.4)))
        v["dst_bytes"] = float(np.round(rng.lognormal(7.0, 2.0))) if rng.random() < 0.8 else 0.0
        v["logged_in"] = "1" if rng.random() < 0.7 else "0"
        v["hot"] = float(rng.poisson(0.3))
        v["count"] = float(rng.integers(1, 40))
        v["srv_count"] = float(rng.integers(1, 40))
        v["serror_rate"] = _rate(rng, 0.02)
        v["rerror_rate"] = _rate(rng, 0.03)
        v["same_srv_rate"] = _rate(rng, 0.92)
        v["diff_srv_rate"] = _rate(rng, 0.05)
        v["dst_host_count"] = float(rng.integers(1, 256))
        v["dst_host_srv_count"] = float(rng.integers(50, 256))
        v["dst_host_same_srv_rate"] = _rate(rng, 0.8, 0.2)
        v["dst_host_serror_rate"] = _rate(rng, 0.02)
        v["dst_host_rerror_rate"] = _rate(rng, 0.04)
    elif category is Category.DOS:
        if label == "smurf":
            v.update(protocol_type="icmp", service="ecr_i")
            v["src_bytes"] = float(rng.choice([520.0, 1032.0]))
            v["count"] = float(rng.integers(300, 512))
        elif label in ("teardrop", "pod"):
            v.update(protocol_type="udp" if label == "teardrop" else "icmp",
                     service="private" if label == "teardrop" else "ecr_i")
            v["wrong_fragment"] = float(rng.integers(1, 4))
            v["src_bytes"] = float(rng.choice([28.0, 1480.0]))
            v["count"] = float(rng.integers(1, 100))
        elif label == "back":
            v["src_bytes"] = float(rng.integers(50000, 60000))
            v["dst_bytes"] = float(rng.integers(5000, 9000))
            v["logged_in"] = "1"
            v["hot"] = float(rng.integers(1, 3))
            v["count"] = float(rng.integers(1, 20))
        else:
            v["service"] = _choice(rng, ["private", "other", "http", "telnet", "ftp_data"], [0.6, 0.1, 0.1, 0.1, 0.1])
            v["flag"] = _choice(rng, ["S0", "REJ", "SF"], [0.75, 0.2, 0.05])
            v["land"] = "1" if label == "land" else "0"
            v["count"] = float(rng.integers(80, 512))
        v["srv_count"] = float(rng.integers(1, 30))
        v["serror_rate"] = _rate(rng, 0.85 if v["flag"] == "S0" else 0.05, 0.12)
        v["rerror_rate"] = _rate(rng, 0.8 if v["flag"] == "REJ" else 0.05, 0.12)
        v["same_srv_rate"] = _rate(rng, 0.08, 0.1)
        v["diff_srv_rate"] = _rate(rng, 0.06)
        v["dst_host_count"] = float(rng.integers(150, 256))
        v["dst_host_srv_count"] = float(rng.integers(1, 40))
        v["dst_host_same_srv_rate"] = _rate(rng, 0.06, 0.1)
        v["dst_host_serror_rate"] = _rate(rng, v["serror_rate"], 0.05)
        v["dst_host_rerror_rate"] = _rate(rng, v["rerror_rate"], 0.05)
    elif category is Category.PROBE:
        v["protocol_type"] = "icmp" if label == "ipsweep" else _choice(rng, ["tcp", "udp"], [0.85, 0.15])
        v["service"] = "eco_i" if label == "ipsweep" else str(rng.choice(_PROBE_SERVICES))
        v["flag"] = _choice(rng, ["REJ", "SF", "RSTO", "S0", "RSTR"], [0.35, 0.35, 0.1, 0.1, 0.1])
        v["src_bytes"] = float(rng.integers(0, 30))
        v["duration"] = float(rng.integers(0, 3)) if rng.random() < 0.1 else 0.0
        v["count"] = float(rng.integers(1, 120))
        v["srv_count"] = float(rng.integers(1, 10))
        v["serror_rate"] = _rate(rng, 0.1, 0.15)
        v["rerror_rate"] = _rate(rng, 0.45, 0.3)
        v["same_srv_rate"] = _rate(rng, 0.3, 0.3)
        v["diff_srv_rate"] = _rate(rng, 0.5, 0.3)
        v["srv_diff_host_rate"] = _rate(rng, 0.4, 0.3)
        v["dst_host_count"] = float(rng.integers(1, 256))
        v["dst_host_srv_count"] = float(rng.integers(1, 30))
        v["dst_host_same_srv_rate"] = _rate(rng, 0.2, 0.25)
        v["dst_host_diff_srv_rate"] = _rate(rng, 0.5, 0.3)
        v["dst_host_same_src_port_rate"] = _rate(rng, 0.7, 0.3)
        v["dst_host_rerror_rate"] = _rate(rng, 0.5, 0.3)
    elif category is Category.R2L:
        v["service"] = {"warezclient": "ftp_data", "guess_passwd": "telnet", "imap": "imap4"}.get(
            label, _choice(rng, ["ftp", "ftp_data", "telnet"]))
        v["flag"] = _choice(rng, ["SF", "RSTO", "S0"], [0.8, 0.15, 0.05])
        v["duration"] = float(rng.exponential(400)) if rng.random() < 0.6 else 0.0
        v["src_bytes"] = float(np.round(rng.lognormal(6.0, 2.2)))
        v["dst_bytes"] = float(np.round(rng.lognormal(5.0, 2.5))) if rng.random() < 0.6 else 0.0
        v["logged_in"] = "1" if rng.random() < 0.6 else "0"
        v["is_guest_login"] = "1" if label == "warezclient" and rng.random() < 0.8 else "0"
        v["num_failed_logins"] = 1.0 if label == "guess_passwd" else 0.0
        v["hot"] = float(rng.integers(0, 6))
        v["count"] = float(rng.integers(1, 10))
        v["srv_count"] = float(rng.integers(1, 10))
        v["same_srv_rate"] = _rate(rng, 0.9, 0.15)
        v["dst_host_count"] = float(rng.integers(1, 256))
        v["dst_host_srv_count"] = float(rng.integers(1, 100))
        v["dst_host_same_srv_rate"] = _rate(rng, 0.5, 0.3)
        v["dst_host_same_src_port_rate"] = _rate(rng, 0.5, 0.35)
    else:
        v["service"] = _choice(rng, ["telnet", "ftp_data", "ftp", "other"], [0.5, 0.25, 0.15, 0.1])
        v["duration"] = float(rng.exponential(120))
        v["src_bytes"] = float(np.round(rng.lognormal(6.5, 1.5)))
        v["dst_bytes"] = float(np.round(rng.lognormal(7.5, 1.8)))
        v["logged_in"] = "1" if rng.random() < 0.9 else "0"
        v["hot"] = float(rng.integers(0, 4))
        v["root_shell"] = 1.0 if rng.random() < 0.6 else 0.0
        v["num_file_creations"] = float(rng.integers(0, 4))
        v["num_shells"] = float(rng.random() < 0.3)
        v["num_root"] = float(rng.integers(0, 3))
        v["count"] = float(rng.integers(1, 5))
        v["srv_count"] = float(rng.integers(1, 5))
        v["same_srv_rate"] = _rate(rng, 0.95)
        v["dst_host_count"] = float(rng.integers(1, 256))
        v["dst_host_srv_count"] = float(rng.integers(1, 60))
        v["dst_host_same_srv_rate"] = _rate(rng, 0.4, 0.3)
    v["srv_serror_rate"] = _rate(rng, v["serror_rate"], 0.03)
    v["srv_rerror_rate"] = _rate(rng, v["rerror_rate"], 0.03)
    v["dst_host_srv_serror_rate"] = _rate(rng, v["dst_host_serror_rate"], 0.03)
    v["dst_host_srv_rerror_rate"] = _rate(rng, v["dst_host_rerror_rate"], 0.03)
    return [v[name] for name in NSL_KDD_SCHEMA.names]


def synthetic_dataset(n: int, seed: int = 0, mix: Mapping[Category, float] | None = None,
                      category_map: CategoryMap | None = None) -> LabeledDataset:
    mix = dict(mix or DEFAULT_MIX)
    cats = list(mix)
    p = np.array([mix[c] for c in cats], dtype=float)
    p /= p.sum()
    cmap = category_map or CategoryMap.default()
    rng = np.random.default_rng(seed)
    records = []
    for _ in range(n):
        cat = cats[rng.choice(len(cats), p=p)]
        names, weights = LABELS[cat]
        label = _choice(rng, names, weights)
        profile_cat, profile_label = cat, label
        if rng.random() < CROSSOVER:
            profile_cat = cats[rng.choice(len(cats), p=p)]
            profile_label = _choice(rng, *LABELS[profile_cat])
        records.append(make_record(_features(rng, profile_cat, profile_label), label, cmap))
    return LabeledDataset(NSL_KDD_SCHEMA, tuple(records))
