"""Exact-arithmetic domain types shared by every other module.

Rationals are :class:`fractions.Fraction`.  Python integers never wrap, so the
only failure mode is runaway growth; :func:`checked` turns numbers whose
numerator or denominator exceed the configured bit cap into a
:class:`MagnitudeError`.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator, Sequence, Union

Rational = Fraction
RationalLike = Union[int, str, Fraction]

NULL_CHOICE = 0

_BIT_CAP = 4096


class MagnitudeError(ArithmeticError):
    """A rational grew past the configured bit-length cap."""


def bit_cap() -> int:
    return _BIT_CAP


def set_bit_cap(bits: int) -> None:
    global _BIT_CAP
    if bits < 64:
        raise ValueError("bit cap must be at least 64")
    _BIT_CAP = int(bits)


@contextlib.contextmanager
def bit_cap_override(bits: int) -> Iterator[None]:
    old = _BIT_CAP
    set_bit_cap(bits)
    try:
        yield
    finally:
        set_bit_cap(old)


def checked(x: Fraction) -> Fraction:
    if x.numerator.bit_length() > _BIT_CAP or x.denominator.bit_length() > _BIT_CAP:
        raise MagnitudeError(
            f"rational exceeds {_BIT_CAP}-bit cap "
            f"(numerator {x.numerator.bit_length()} bits, "
            f"denominator {x.denominator.bit_length()} bits)"
        )
    return x


def to_rational(value: RationalLike) -> Fraction:
    """Parse an int, Fraction or string such as ``"3/7"`` or ``"0.25"`` exactly.

    Floats are rejected: their binary expansion is almost never what the
    caller meant.
    """
    if isinstance(value, bool):
        raise TypeError("booleans are not rationals")
    if isinstance(value, Fraction):
        return checked(value)
    if isinstance(value, int):
        return checked(Fraction(value))
    if isinstance(value, str):
        try:
            return checked(Fraction(value.strip()))
        except (ValueError, ZeroDivisionError) as exc:
            raise ValueError(f"not a rational: {value!r}") from exc
    raise TypeError(f"cannot convert {type(value).__name__} to an exact rational")


def format_rational(x: Fraction) -> str:
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


@dataclass(frozen=True)
class FiniteDistribution:
    """Finite-support distribution over non-negative sizes.

    Atoms are kept sorted by size with distinct sizes; duplicate sizes are
    merged and zero-probability atoms dropped on construction.
    """

    atoms: tuple[tuple[Fraction, Fraction], ...]

    def __init__(self, atoms: Iterable[tuple[RationalLike, RationalLike]]):
        merged: dict[Fraction, Fraction] = {}
        for size, prob in atoms:
            s, p = to_rational(size), to_rational(prob)
            if s < 0:
                raise ValueError(f"negative size {s}")
            if p < 0:
                raise ValueError(f"negative probability {p} at size {s}")
            merged[s] = merged.get(s, Fraction(0)) + p
        canon = tuple((s, p) for s, p in sorted(merged.items()) if p != 0)
        if not canon:
            raise ValueError("distribution has no atoms")
        total = sum(p for _, p in canon)
        if total != 1:
            raise ValueError(f"probabilities sum to {total}, not 1")
        object.__setattr__(self, "atoms", canon)

    @classmethod
    def point(cls, size: RationalLike) -> "FiniteDistribution":
        return cls([(size, 1)])

    @property
    def sizes(self) -> tuple[Fraction, ...]:
        return tuple(s for s, _ in self.atoms)

    @property
    def probs(self) -> tuple[Fraction, ...]:
        return tuple(p for _, p in self.atoms)

    @property
    def max_size(self) -> Fraction:
        return self.atoms[-1][0]

    def __len__(self) -> int:
        return len(self.atoms)

    def __iter__(self):
        return iter(self.atoms)


def cdf_at(dist: FiniteDistribution, b: RationalLike) -> Fraction:
    """Exact Pr[s <= b]."""
    b = to_rational(b)
    return sum((p for s, p in dist.atoms if s <= b), Fraction(0))


def truncated_mean(dist: FiniteDistribution, t: RationalLike) -> Fraction:
    """Exact E[min(s, t)]."""
    t = to_rational(t)
    if t <= 0:
        raise ValueError("truncation point must be positive")
    return sum((min(s, t) * p for s, p in dist.atoms), Fraction(0))


def raw_moment(dist: FiniteDistribution, r: int) -> Fraction:
    if r < 1:
        raise ValueError("moment order must be >= 1")
    return sum((s**r * p for s, p in dist.atoms), Fraction(0))


@dataclass(frozen=True)
class MskcChoice:
    cost: Fraction
    dist: FiniteDistribution

    def __init__(self, cost: RationalLike, dist: FiniteDistribution):
        c = to_rational(cost)
        if c < 0:
            raise ValueError("choice cost must be non-negative")
        object.__setattr__(self, "cost", c)
        object.__setattr__(self, "dist", dist)


# The null choice is recognised by identity: a real zero-cost, zero-size
# choice still earns the item's value, the null choice earns nothing.
NULL = MskcChoice(0, FiniteDistribution.point(0))


@dataclass(frozen=True)
class MskcItem:
    """An item with its choices; ``choices[NULL_CHOICE]`` is always :data:`NULL`.

    Pass only the real choices; the null choice is prepended unless the
    sequence already starts with it.
    """

    value: Fraction
    choices: tuple[MskcChoice, ...]

    def __init__(self, value: RationalLike, choices: Sequence[MskcChoice]):
        v = to_rational(value)
        if v < 0:
            raise ValueError("item value must be non-negative")
        ch = tuple(choices)
        if not ch or ch[NULL_CHOICE] is not NULL:
            ch = (NULL,) + ch
        object.__setattr__(self, "value", v)
        object.__setattr__(self, "choices", ch)

    @property
    def real_choices(self) -> range:
        return range(1, len(self.choices))


@dataclass(frozen=True)
class MskcInstance:
    items: tuple[MskcItem, ...]
    budget: Fraction = Fraction(1)

    def __init__(self, items: Iterable[MskcItem], budget: RationalLike = 1):
        b = to_rational(budget)
        if b <= 0:
            raise ValueError("budget must be positive")
        object.__setattr__(self, "items", tuple(items))
        object.__setattr__(self, "budget", b)

    def __len__(self) -> int:
        return len(self.items)


@dataclass(frozen=True)
class ContractAction:
    cost: Fraction
    dist: FiniteDistribution

    def __init__(self, cost: RationalLike, dist: FiniteDistribution):
        c = to_rational(cost)
        if c < 0:
            raise ValueError("action cost must be non-negative")
        object.__setattr__(self, "cost", c)
        object.__setattr__(self, "dist", dist)


@dataclass(frozen=True)
class ContractAgent:
    value: Fraction
    actions: tuple[ContractAction, ...]

    def __init__(self, value: RationalLike, actions: Sequence[ContractAction]):
        v = to_rational(value)
        if v < 0:
            raise ValueError("agent value must be non-negative")
        if not actions:
            raise ValueError("an agent needs at least one action")
        # stable sort keeps the caller's order among equal costs
        acts = tuple(sorted(actions, key=lambda a: a.cost))
        object.__setattr__(self, "value", v)
        object.__setattr__(self, "actions", acts)

    @property
    def support(self) -> tuple[Fraction, ...]:
        return tuple(sorted({s for a in self.actions for s in a.dist.sizes}))


@dataclass(frozen=True)
class ContractInstance:
    agents: tuple[ContractAgent, ...]
    budget: Fraction = Fraction(1)

    def __init__(self, agents: Iterable[ContractAgent], budget: RationalLike = 1):
        b = to_rational(budget)
        if b <= 0:
            raise ValueError("budget must be positive")
        object.__setattr__(self, "agents", tuple(agents))
        object.__setattr__(self, "budget", b)

    def __len__(self) -> int:
        return len(self.agents)


@dataclass(frozen=True)
class Contract:
    """Monotone payment schedule: shorter completion times are paid at least as much."""

    payments: tuple[tuple[Fraction, Fraction], ...]

    def __init__(self, payments: Iterable[tuple[RationalLike, RationalLike]]):
        pairs = sorted((to_rational(s), to_rational(t)) for s, t in payments)
        for (s0, t0), (s1, t1) in zip(pairs, pairs[1:]):
            if s0 == s1:
                raise ValueError(f"duplicate size {s0} in contract")
            if t0 < t1:
                raise ValueError(f"payment increases from {t0} at {s0} to {t1} at {s1}")
        for s, t in pairs:
            if t < 0:
                raise ValueError(f"negative payment {t} at size {s}")
        object.__setattr__(self, "payments", tuple(pairs))

    def pay(self, size: Fraction) -> Fraction:
        for s, t in self.payments:
            if s == size:
                return t
        raise KeyError(f"contract has no payment for size {size}")

    def expected(self, dist: FiniteDistribution) -> Fraction:
        return sum((self.pay(s) * p for s, p in dist.atoms), Fraction(0))

    def covers(self, sizes: Iterable[Fraction]) -> bool:
        keys = {s for s, _ in self.payments}
        return all(s in keys for s in sizes)


def choice_weight(item: MskcItem, choice_index: int, t: RationalLike) -> Fraction:
    """Profit proxy v * Pr[s <= t] - p; zero for the null choice."""
    if choice_index == NULL_CHOICE:
        return Fraction(0)
    ch = item.choices[choice_index]
    return item.value * cdf_at(ch.dist, t) - ch.cost


def choice_size(item: MskcItem, choice_index: int, t: RationalLike) -> Fraction:
    """Expected truncated size E[min(s, t)] of a choice."""
    return truncated_mean(item.choices[choice_index].dist, t)
