"""Per-dataset ingestion recipes and hyper-parameter defaults."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from . import data

NSL_KDD_COLUMNS = [
    "duration", "protocol_type", "service", "flag", "src_bytes", "dst_bytes", "land",
    "wrong_fragment", "urgent", "hot", "num_failed_logins", "logged_in", "num_compromised",
    "root_shell", "su_attempted", "num_root", "num_file_creations", "num_shells",
    "num_access_files", "num_outbound_cmds", "is_host_login", "is_guest_login", "count",
    "srv_count", "serror_rate", "srv_serror_rate", "rerror_rate", "srv_rerror_rate",
    "same_srv_rate", "diff_srv_rate", "srv_diff_host_rate", "dst_host_count",
    "dst_host_srv_count", "dst_host_same_srv_rate", "dst_host_diff_srv_rate",
    "dst_host_same_src_port_rate", "dst_host_srv_diff_host_rate", "dst_host_serror_rate",
    "dst_host_srv_serror_rate", "dst_host_rerror_rate", "dst_host_srv_rerror_rate",
    "label", "difficulty",
]

_NSL_CATEGORIES = {
    "DoS": "back land neptune pod smurf teardrop apache2 mailbomb processtable udpstorm worm",
    "Probe": "ipsweep nmap portsweep satan mscan saint",
    "R2L": "ftp_write guess_passwd imap multihop phf spy warezclient warezmaster sendmail "
           "named snmpgetattack snmpguess xlock xsnoop httptunnel",
    "U2R": "buffer_overflow loadmodule perl rootkit ps sqlattack xterm",
}
NSL_KDD_LABELS = {"normal": "Normal"}
for _cat, _names in _NSL_CATEGORIES.items():
    NSL_KDD_LABELS.update({n: _cat for n in _names.split()})


@dataclass(frozen=True)
class DatasetProfile:
    name: str
    files: tuple[str, ...]
    label_column: str
    majority_cap: int | None
    num_groups: int
    calib_b: float
    beta: float
    categorical: tuple[str, ...] = ()
    drop: tuple[str, ...] = ()
    column_names: tuple[str, ...] | None = None
    label_map: dict = field(default_factory=dict)
    expected_features: int | None = None

    def resolve_files(self, data_dir) -> list[Path]:
        data_dir = Path(data_dir)
        out = []
        for pattern in self.files:
            hits = sorted(data_dir.glob(pattern))
            if not hits:
                raise data.DataError(f"{self.name}: no file matching {pattern!r} in {data_dir}")
            out.extend(hits)
        return out

    def load(self, paths) -> data.RawDataset:
        names = list(self.column_names) if self.column_names else None
        raws = [data.load_csv(p, self.label_column, names, self.categorical, self.drop) for p in paths]
        raw = data.merge(raws)
        if self.expected_features is not None and raw.arity != self.expected_features:
            raise data.DataError(
                f"{self.name}: expected {self.expected_features} feature columns, found {raw.arity}"
            )
        return raw


PROFILES = {
    "cic_ids2017": DatasetProfile(
        name="cic_ids2017",
        files=("*.csv",),
        label_column="Label",
        majority_cap=10000,
        num_groups=8,
        calib_b=0.25,
        beta=0.005,
        expected_features=78,
    ),
    "nsl_kdd": DatasetProfile(
        name="nsl_kdd",
        files=("KDDTrain+_20Percent*", "KDDTest-21*"),
        label_column="label",
        majority_cap=None,
        num_groups=5,
        calib_b=0.02,
        beta=0.15,
        categorical=("protocol_type", "service", "flag"),
        drop=("difficulty",),
        column_names=tuple(NSL_KDD_COLUMNS),
        label_map=NSL_KDD_LABELS,
        expected_features=41,
    ),
    "unsw_nb15": DatasetProfile(
        name="unsw_nb15",
        files=("UNSW_NB15_training-set*", "UNSW_NB15_testing-set*"),
        label_column="attack_cat",
        majority_cap=10000,
        num_groups=10,
        calib_b=0.02,
        beta=0.1,
        categorical=("proto", "service", "state"),
        drop=("id", "label"),
        label_map={"": "Normal"},
        expected_features=42,
    ),
}


def get(name: str, **overrides) -> DatasetProfile:
    if name in PROFILES:
        if not overrides:
            return PROFILES[name]
        base = PROFILES[name].__dict__ | overrides
        return DatasetProfile(**base)
    if name == "custom":
        defaults = dict(name="custom", files=("*.csv",), label_column="label", majority_cap=10000,
                        num_groups=2, calib_b=0.0, beta=0.01)
        return DatasetProfile(**(defaults | overrides))
    raise KeyError(f"unknown dataset profile {name!r}")
