"""The single table of named ``(a, F, l)`` triples shared by the library and the CLI.

Grammar::

    hk | ghk | bl
    qpl:<p>            1 < p <= 3
    lpl:<p>            p > 1
    pl:<p>             p >= 1   (pure-entropy limit, cost 0 at 0 and inf elsewhere)
    wp:<p>             p >= 1   (balanced transport with the indicator entropy)
    lim-pe:<p>:<n>     (1/2, U_p, n d)
    lim-sturm:<p>:<n>  (1/p, n U_1, d^p)
    lim-pr:<n>         (1, F_n, d)
    custom/<a>/<entropy>/<cost>
"""

from __future__ import annotations

from dataclasses import dataclass

from .entropy import CostFunction, DomainError, EntropyFunction


class PresetError(DomainError):
    pass


@dataclass(frozen=True)
class Preset:
    name: str
    a: float
    F: EntropyFunction
    cost: CostFunction

    @property
    def p_homogeneity(self) -> float:
        """Default cone exponent: ``1/a``."""
        return 1.0 / self.a


def _entropy_up(p: float) -> EntropyFunction:
    return EntropyFunction("kl") if p == 1 else EntropyFunction("power", p)


def _num(text: str, what: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise PresetError(f"bad {what} {text!r}") from None


def parse_preset(text: str) -> Preset:
    text = text.strip()
    if text.startswith("custom/"):
        parts = text.split("/")
        if len(parts) != 4:
            raise PresetError("custom presets look like custom/<a>/<entropy>/<cost>")
        a = _num(parts[1], "exponent")
        if not 0 < a <= 1:
            raise PresetError("the exponent a must lie in (0, 1]")
        return Preset(text, a, EntropyFunction.parse(parts[2]), CostFunction.parse(parts[3]))
    head, *args = text.split(":")
    if head in ("hk", "ghk", "bl"):
        if args:
            raise PresetError(f"preset {head!r} takes no parameter")
        if head == "hk":
            return Preset("hk", 0.5, EntropyFunction("kl"), CostFunction("hk"))
        if head == "ghk":
            return Preset("ghk", 0.5, EntropyFunction("kl"), CostFunction("pow", 2))
        return Preset("bl", 1.0, EntropyFunction("tv"), CostFunction("lin"))
    if head in ("qpl", "lpl", "pl", "wp"):
        if len(args) != 1:
            raise PresetError(f"preset {head!r} needs one parameter")
        p = _num(args[0], "exponent")
        if head == "qpl":
            if not 1 < p <= 3:
                raise PresetError("qpl:p is a distance only for 1 < p <= 3")
            return Preset(text, 0.5, EntropyFunction("power", p), CostFunction("pow", 2))
        if head == "lpl":
            if not p > 1:
                raise PresetError("lpl:p needs p > 1")
            return Preset(text, 0.5, EntropyFunction("power", p), CostFunction("lin"))
        if head == "pl":
            if not p >= 1:
                raise PresetError("pl:p needs p >= 1")
            return Preset(text, 0.5, _entropy_up(p), CostFunction("pe"))
        if not p >= 1:
            raise PresetError("wp:p needs p >= 1")
        return Preset(text, 1.0 / p, EntropyFunction("indicator"), CostFunction("pow", p))
    if head == "lim-pe":
        if len(args) != 2:
            raise PresetError("lim-pe needs <p>:<n>")
        p, n = _num(args[0], "exponent"), _num(args[1], "scale")
        if not p >= 1:
            raise PresetError("lim-pe needs p >= 1")
        return Preset(text, 0.5, _entropy_up(p), CostFunction("scaled", n))
    if head == "lim-sturm":
        if len(args) != 2:
            raise PresetError("lim-sturm needs <p>:<n>")
        p, n = _num(args[0], "exponent"), _num(args[1], "scale")
        if not p >= 1:
            raise PresetError("lim-sturm needs p >= 1")
        F = EntropyFunction("kl") if n == 1 else EntropyFunction("scaled-kl", n)
        return Preset(text, 1.0 / p, F, CostFunction("pow", p))
    if head == "lim-pr":
        if len(args) != 1:
            raise PresetError("lim-pr needs <n>")
        return Preset(text, 1.0, EntropyFunction("pr-reg", _num(args[0], "scale")),
                      CostFunction("lin"))
    raise PresetError(f"unknown preset {text!r}")


def as_preset(preset) -> Preset:
    return preset if isinstance(preset, Preset) else parse_preset(preset)


NAMED = ("hk", "ghk", "qpl:2", "lpl:2", "pl:1", "bl", "wp:2")
