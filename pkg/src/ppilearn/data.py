"""Core domain types and file ingestion for proteins and interaction lists.

Input formats:

* Proteins: JSON-lines, one object per line with keys ``id``, ``sequence``
  and ``coords`` (a list of ``[x, y, z]`` triples in angstroms, one per
  residue).
* Interactions: tab-separated ``protein_a<TAB>protein_b<TAB>type`` rows with
  a header line, STRING-export style. Rows naming the same unordered pair
  are merged into a single multi-label record.
* Residue properties: a versioned JSON fixture mapping each canonical
  amino-acid letter to seven physicochemical values.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Mapping, Sequence

import numpy as np

from .validation import as_float_matrix

CANONICAL_AMINO_ACIDS = "ACDEFGHIKLMNPQRSTVWY"

INTERACTION_TYPES = (
    "reaction",
    "binding",
    "ptmod",
    "activation",
    "inhibition",
    "catalysis",
    "expression",
)

N_INTERACTION_TYPES = len(INTERACTION_TYPES)
N_RESIDUE_FEATURES = 7


class ParseError(ValueError):
    """Raised when an input file cannot be parsed."""


class ValidationError(ValueError):
    """Raised when parsed data violates a domain invariant."""


@dataclass
class ProteinRecord:
    """One protein: identifier, amino-acid sequence and per-residue coordinates.

    ``coords`` holds one 3-D position per residue (alpha-carbon convention),
    in angstroms; its length must equal the sequence length.
    """

    id: str
    sequence: str
    coords: np.ndarray

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.float64)
        if len(self.sequence) == 0:
            raise ValidationError(f"protein {self.id!r}: empty sequence")
        if self.coords.ndim != 2 or self.coords.shape[1] != 3:
            raise ValidationError(
                f"protein {self.id!r}: coords must be an Mx3 array, got shape "
                f"{self.coords.shape}"
            )
        if self.coords.shape[0] != len(self.sequence):
            raise ValidationError(
                f"protein {self.id!r}: {len(self.sequence)} residues but "
                f"{self.coords.shape[0]} coordinates"
            )
        for pos, letter in enumerate(self.sequence):
            if letter not in CANONICAL_AMINO_ACIDS:
                raise ValidationError(
                    f"protein {self.id!r}: non-canonical amino acid {letter!r} "
                    f"at position {pos}"
                )

    @property
    def n_residues(self) -> int:
        return len(self.sequence)


@dataclass(frozen=True)
class InteractionRecord:
    """An undirected protein pair with its set of interaction types."""

    protein_a: str
    protein_b: str
    types: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "types", frozenset(self.types))
        if self.protein_a == self.protein_b:
            raise ValidationError(f"self-interaction for protein {self.protein_a!r}")
        if not self.types:
            raise ValidationError(
                f"pair ({self.protein_a!r}, {self.protein_b!r}) has no types"
            )
        unknown = self.types - set(INTERACTION_TYPES)
        if unknown:
            raise ValidationError(
                f"unknown interaction type(s) {sorted(unknown)}; valid types are "
                f"{list(INTERACTION_TYPES)}"
            )

    @property
    def key(self) -> tuple:
        """Order-independent pair key."""
        return tuple(sorted((self.protein_a, self.protein_b)))

    def type_vector(self) -> np.ndarray:
        """Multi-hot vector over the fixed interaction-type order."""
        vec = np.zeros(N_INTERACTION_TYPES, dtype=np.int64)
        for t in self.types:
            vec[INTERACTION_TYPES.index(t)] = 1
        return vec


class AminoAcidPropertyTable:
    """Versioned lookup table: amino-acid letter -> 7 physicochemical values.

    The shipped fixture covers topological polar surface area, polarity,
    isoelectric point, acidity/alkalinity class, octanol-water partition
    coefficient, hydrogen-bond donor count and hydrogen-bond acceptor count,
    in that column order.
    """

    def __init__(self, values: Mapping[str, Sequence[float]], columns: Sequence[str],
                 version: str = "unversioned"):
        if set(values) != set(CANONICAL_AMINO_ACIDS):
            missing = set(CANONICAL_AMINO_ACIDS) - set(values)
            extra = set(values) - set(CANONICAL_AMINO_ACIDS)
            raise ValidationError(
                f"property table must cover exactly the 20 canonical amino acids; "
                f"missing={sorted(missing)} extra={sorted(extra)}"
            )
        if len(columns) != N_RESIDUE_FEATURES:
            raise ValidationError(f"expected {N_RESIDUE_FEATURES} columns, got {len(columns)}")
        self.columns = tuple(columns)
        self.version = version
        self._rows = {}
        for letter, row in values.items():
            arr = np.asarray(row, dtype=np.float64)
            if arr.shape != (N_RESIDUE_FEATURES,):
                raise ValidationError(
                    f"property row for {letter!r} must have {N_RESIDUE_FEATURES} "
                    f"values, got shape {arr.shape}"
                )
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"property row for {letter!r} has non-finite values")
            self._rows[letter] = arr

    def row(self, letter: str) -> np.ndarray:
        return self._rows[letter]

    def as_matrix(self) -> np.ndarray:
        """20x7 matrix in canonical letter order."""
        return np.stack([self._rows[a] for a in CANONICAL_AMINO_ACIDS])

    def content_hash(self) -> str:
        """Stable hash of the table contents; pins the fixture version in caches."""
        payload = {
            "columns": list(self.columns),
            "values": {a: self._rows[a].tolist() for a in CANONICAL_AMINO_ACIDS},
        }
        digest = hashlib.sha256(json.dumps(payload, sort_keys=True).encode())
        return digest.hexdigest()

    @classmethod
    def from_json(cls, path) -> "AminoAcidPropertyTable":
        with open(path) as fh:
            payload = json.load(fh)
        return cls(payload["values"], payload["columns"], payload.get("version", "unversioned"))

    @classmethod
    def default(cls) -> "AminoAcidPropertyTable":
        """The property fixture shipped with the package."""
        with resources.files("ppilearn").joinpath("aa_properties.json").open() as fh:
            payload = json.load(fh)
        return cls(payload["values"], payload["columns"], payload.get("version", "unversioned"))


def load_proteins(path) -> list:
    """Read a JSON-lines protein file into a list of ProteinRecord.

    Order is preserved. A malformed line raises ParseError naming the line
    number; an invariant violation raises ValidationError naming the protein.
    """
    records = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}: line {lineno}: invalid JSON ({exc.msg})") from exc
            try:
                pid = obj["id"]
                sequence = obj["sequence"]
                coords = obj["coords"]
            except (KeyError, TypeError) as exc:
                raise ParseError(
                    f"{path}: line {lineno}: entry must have id, sequence and coords"
                ) from exc
            records.append(ProteinRecord(id=pid, sequence=sequence, coords=coords))
    return records


def save_proteins(path, records: Iterable[ProteinRecord]) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps({
                "id": rec.id,
                "sequence": rec.sequence,
                "coords": rec.coords.tolist(),
            }) + "\n")


PPI_HEADER = ("protein_a", "protein_b", "type")


def load_ppi(path) -> list:
    """Read a STRING-style TSV of (pair, type) rows into InteractionRecords.

    Rows for the same unordered pair are merged into one record holding the
    union of their types, so the result is one multi-label record per pair.
    """
    merged: dict = {}
    order: list = []
    with open(path) as fh:
        header = fh.readline()
        if not header:
            return []
        cols = header.rstrip("\n").split("\t")
        if len(cols) < 3:
            raise ParseError(f"{path}: header must have 3 tab-separated columns")
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) < 3:
                raise ParseError(f"{path}: line {lineno}: expected 3 tab-separated fields")
            a, b, t = parts[0], parts[1], parts[2]
            if a == b:
                raise ValidationError(f"{path}: line {lineno}: self-interaction for {a!r}")
            if t not in INTERACTION_TYPES:
                raise ValidationError(
                    f"{path}: line {lineno}: unknown interaction type {t!r}; valid "
                    f"types are {list(INTERACTION_TYPES)}"
                )
            key = tuple(sorted((a, b)))
            if key not in merged:
                merged[key] = set()
                order.append(key)
            merged[key].add(t)
    return [
        InteractionRecord(protein_a=key[0], protein_b=key[1], types=frozenset(merged[key]))
        for key in order
    ]


def save_ppi(path, records: Iterable[InteractionRecord]) -> None:
    with open(path, "w") as fh:
        fh.write("\t".join(PPI_HEADER) + "\n")
        for rec in records:
            for t in INTERACTION_TYPES:
                if t in rec.types:
                    fh.write(f"{rec.protein_a}\t{rec.protein_b}\t{t}\n")


class ResidueFeatureScaler:
    """Per-column z-score over residue rows of a reference protein set.

    Statistics are fit on training proteins only and then applied unchanged
    to validation/test proteins. Zero-variance columns are left unscaled.
    """

    def __init__(self):
        self.mean_ = None
        self.std_ = None

    def fit(self, records: Iterable[ProteinRecord], table: AminoAcidPropertyTable):
        rows = [table.row(letter) for rec in records for letter in rec.sequence]
        if not rows:
            raise ValidationError("cannot fit scaler on an empty protein set")
        mat = np.stack(rows)
        self.mean_ = mat.mean(axis=0)
        std = mat.std(axis=0)
        std[std == 0.0] = 1.0
        self.std_ = std
        return self

    def transform(self, matrix: np.ndarray) -> np.ndarray:
        if self.mean_ is None:
            raise ValidationError("scaler is not fitted")
        return (matrix - self.mean_) / self.std_

    def to_dict(self) -> dict:
        return {"mean": self.mean_.tolist(), "std": self.std_.tolist()}

    @classmethod
    def from_dict(cls, payload: dict) -> "ResidueFeatureScaler":
        scaler = cls()
        scaler.mean_ = np.asarray(payload["mean"], dtype=np.float64)
        scaler.std_ = np.asarray(payload["std"], dtype=np.float64)
        return scaler


def featurize(sequence: str, table: AminoAcidPropertyTable,
              scaler: ResidueFeatureScaler | None = None) -> np.ndarray:
    """Per-residue Mx7 property matrix for a sequence.

    Row i is the table row of residue i, optionally z-scored by a fitted
    scaler. Pure given (sequence, table, scaler): repeated calls are
    bit-identical.
    """
    if len(sequence) == 0:
        raise ValidationError("cannot featurize an empty sequence")
    rows = []
    for pos, letter in enumerate(sequence):
        if letter not in CANONICAL_AMINO_ACIDS:
            raise ValidationError(f"non-canonical amino acid {letter!r} at position {pos}")
        rows.append(table.row(letter))
    matrix = np.stack(rows)
    if scaler is not None:
        matrix = scaler.transform(matrix)
    return as_float_matrix(matrix, "residue features", n_cols=N_RESIDUE_FEATURES)
