import math
from collections.abc import Sequence
from pathlib import Path
from typing import Self

import numpy as np
import pandas as pd
from attrs import field, frozen

from .errors import InvalidInputError, ParseError

MISSING_TOKEN = "NA"
RESPONSE_COLUMN = "y"
TRUTH_COLUMN = "m"


def _frozen_array(dtype):
    def convert(value) -> np.ndarray:
        arr = np.array(value, dtype=dtype)
        arr.setflags(write=False)
        return arr

    return convert


def _optional_array(value) -> np.ndarray | None:
    if value is None:
        return None
    return _frozen_array(float)(value)


@frozen(eq=False)
class Dataset:
    features: np.ndarray = field(converter=_frozen_array(float))
    mask: np.ndarray = field(converter=_frozen_array(bool))
    response: np.ndarray = field(converter=_frozen_array(float))
    # noiseless regression function values, only known for simulated data
    truth: np.ndarray | None = field(default=None, converter=_optional_array)

    def __attrs_post_init__(self):
        if self.features.ndim != 2:
            raise InvalidInputError(f"features must be a matrix ({self.features.shape=})")

        if self.mask.shape != self.features.shape:
            raise InvalidInputError(
                f"mask and features differ in shape ({self.mask.shape=}, {self.features.shape=})"
            )

        if self.response.shape != (self.features.shape[0],):
            raise InvalidInputError(
                f"response length must match rows ({self.response.shape=}, {self.features.shape=})"
            )

        if not np.all(np.isfinite(self.response)):
            raise InvalidInputError("response must be fully observed and finite")

        if self.truth is not None and self.truth.shape != self.response.shape:
            raise InvalidInputError(f"truth length must match rows ({self.truth.shape=})")

        observed = self.features[~self.mask]
        if not np.all((observed >= 0) & (observed <= 1)):
            raise InvalidInputError("observed features must lie in [0, 1]")

        if self.mask.any() and not np.all(np.isnan(self.features[self.mask])):
            # masked cells keep no readable value
            features = self.features.copy()
            features[self.mask] = np.nan
            object.__setattr__(self, "features", _frozen_array(float)(features))

    @classmethod
    def complete(cls, features, response, truth=None) -> Self:
        features = np.asarray(features, dtype=float)
        return cls(
            features=features,
            mask=np.zeros(features.shape, dtype=bool),
            response=response,
            truth=truth,
        )

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    @property
    def has_missing(self) -> bool:
        return bool(self.mask.any())

    def take(self, indices) -> Self:
        indices = np.asarray(indices, dtype=int)
        return type(self)(
            features=self.features[indices],
            mask=self.mask[indices],
            response=self.response[indices],
            truth=None if self.truth is None else self.truth[indices],
        )

    def filled(self, features) -> Self:
        return type(self)(
            features=features,
            mask=np.zeros(self.mask.shape, dtype=bool),
            response=self.response,
            truth=self.truth,
        )

    def missing_fraction(self) -> np.ndarray:
        if self.n == 0:
            return np.zeros(self.p)
        return self.mask.mean(axis=0)

    def equals(self, other: "Dataset") -> bool:
        if self.features.shape != other.features.shape:
            return False

        same_truth = (self.truth is None and other.truth is None) or (
            self.truth is not None
            and other.truth is not None
            and np.array_equal(self.truth, other.truth)
        )

        return (
            np.array_equal(self.mask, other.mask)
            and np.array_equal(self.features[~self.mask], other.features[~other.mask])
            and np.array_equal(self.response, other.response)
            and same_truth
        )


def _rate(value: float) -> float:
    value = float(value)
    if not 0 <= value < 1:
        raise InvalidInputError(f"missing rate must lie in [0, 1) ({value=})")
    return value


@frozen
class MissRates:
    rates: tuple[float, ...] = field(converter=lambda v: tuple(_rate(r) for r in v))

    def __len__(self) -> int:
        return len(self.rates)


def friedman1(x: Sequence[float]) -> float:
    if len(x) != 5:
        raise InvalidInputError(f"friedman1 takes exactly 5 coordinates ({len(x)=})")

    x1, x2, x3, x4, x5 = (float(v) for v in x)
    return (
        10 * math.sin(math.pi * x1 * x2)
        + 20 * (x3 - 0.5) ** 2
        + 10 * x4
        + 5 * x5
    )


def generate_sample(n: int, sigma: float = 1.0, seed: int = 0) -> Dataset:
    if n < 0:
        raise InvalidInputError(f"sample size must be non-negative ({n=})")

    if sigma < 0:
        raise InvalidInputError(f"noise standard deviation must be non-negative ({sigma=})")

    rng = np.random.default_rng(seed)
    features = rng.uniform(0.0, 1.0, size=(n, 5))
    noise = rng.normal(0.0, sigma, size=n)

    truth = np.array([friedman1(row) for row in features], dtype=float)

    return Dataset.complete(features, truth + noise, truth=truth)


def inject_mcar(d: Dataset, rates: MissRates | Sequence[float], seed: int = 0) -> Dataset:
    if not isinstance(rates, MissRates):
        rates = MissRates(rates)

    if len(rates) != d.p:
        raise InvalidInputError(f"one rate per feature is required ({len(rates)=}, {d.p=})")

    rng = np.random.default_rng(seed)
    drawn = rng.random(size=(d.n, d.p)) < np.asarray(rates.rates)

    return Dataset(
        features=d.features,
        mask=d.mask | drawn,
        response=d.response,
        truth=d.truth,
    )


def _header(p: int, with_truth: bool) -> list[str]:
    header = [f"x{j + 1}" for j in range(p)] + [RESPONSE_COLUMN]
    if with_truth:
        header.append(TRUTH_COLUMN)
    return header


def write_csv(d: Dataset, path: str | Path) -> None:
    header = _header(d.p, d.truth is not None)

    columns = [d.features[:, j] for j in range(d.p)] + [d.response]
    if d.truth is not None:
        columns.append(d.truth)

    frame = pd.DataFrame(dict(zip(header, columns, strict=True)), columns=header)
    frame.to_csv(path, index=False, na_rep=MISSING_TOKEN, lineterminator="\n")


def _check_header(columns: list[str], p: int | None) -> tuple[int, bool]:
    with_truth = bool(columns) and columns[-1] == TRUTH_COLUMN
    body = columns[:-1] if with_truth else columns

    if not body or body[-1] != RESPONSE_COLUMN:
        raise ParseError(f"header must end with '{RESPONSE_COLUMN}' or '{RESPONSE_COLUMN},{TRUTH_COLUMN}'")

    n_features = len(body) - 1
    if body[:-1] != [f"x{j + 1}" for j in range(n_features)]:
        raise ParseError(f"feature columns must be named x1..x{n_features}")

    if p is not None and n_features != p:
        raise ParseError(f"header declares {n_features} features, expected {p}")

    return n_features, with_truth


def _parse_token(token, row: int, column: str, allow_missing: bool) -> float:
    if not isinstance(token, str) or token == "":
        raise ParseError("empty field", row=row, column=column)

    if token == MISSING_TOKEN:
        if not allow_missing:
            raise ParseError(f"'{MISSING_TOKEN}' not allowed here", row=row, column=column)
        return math.nan

    try:
        return float(token)
    except ValueError as e:
        raise ParseError(f"non-numeric token {token!r}", row=row, column=column) from e


def read_csv(path: str | Path, p: int | None = None) -> Dataset:
    try:
        frame = pd.read_csv(
            path,
            dtype=str,
            keep_default_na=False,
            na_filter=False,
            encoding="utf-8",
        )
    except pd.errors.EmptyDataError as e:
        raise ParseError("empty file") from e
    except pd.errors.ParserError as e:
        raise ParseError(f"malformed row: {e}") from e

    if len(frame) and not isinstance(frame.index, pd.RangeIndex):
        # pandas takes the first field as the index when every row is one field too long
        raise ParseError(f"row has more fields than the header ({len(frame.columns)})", row=0)

    n_features, with_truth = _check_header(list(frame.columns), p)

    columns = list(frame.columns)
    values = np.empty((len(frame), len(columns)), dtype=float)
    for j, name in enumerate(columns):
        allow_missing = j < n_features
        for i, token in enumerate(frame[name].tolist()):
            values[i, j] = _parse_token(token, i, name, allow_missing)

    features = values[:, :n_features]
    mask = np.isnan(features)

    try:
        return Dataset(
            features=features,
            mask=mask,
            response=values[:, n_features],
            truth=values[:, n_features + 1] if with_truth else None,
        )
    except InvalidInputError as e:
        raise ParseError(str(e)) from e
