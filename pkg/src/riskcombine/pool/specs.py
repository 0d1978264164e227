"""Method specifications and the standard 90-method pool."""

from __future__ import annotations

from dataclasses import dataclass

FAMILIES = ("HS", "GaussianWindow", "EWMA", "GARCH", "GJR", "CAViaR", "CARE")
DRIVERS = ("return", "range", "rv")
DISTS = ("gaussian", "t", "skewt")
TAILS = ("native", "EVT", "FHS")
FORMS = ("SAV", "AS", "IG")
ES_FORMS = ("multiplicative", "additive")

# window 0 means "the whole estimation window"
FULL_WINDOW = 0


@dataclass(frozen=True)
class MethodSpec:
    family: str
    driver: str = "return"
    dist: str = "gaussian"
    tail: str = "native"
    caviar_form: str = "SAV"
    es_form: str = "multiplicative"
    window: int = FULL_WINDOW

    def __post_init__(self):
        checks = [(self.family, FAMILIES), (self.driver, DRIVERS), (self.dist, DISTS),
                  (self.tail, TAILS), (self.caviar_form, FORMS), (self.es_form, ES_FORMS)]
        for value, allowed in checks:
            if value not in allowed:
                raise ValueError(f"{value!r} is not one of {allowed}")
        if self.window < 0:
            raise ValueError("window must be nonnegative")
        if self.family in ("HS", "GaussianWindow", "EWMA") and self.driver != "return":
            raise ValueError(f"{self.family} only uses returns")

    @property
    def needs(self) -> str | None:
        """Extra data column the method requires, if any."""
        return self.driver if self.driver != "return" else None

    @property
    def has_native(self) -> bool:
        return self.family in ("GaussianWindow", "EWMA") or (
            self.family in ("GARCH", "GJR") and self.tail == "native")

    def method_id(self, est_window: int | None = None) -> str:
        w = self.window or est_window
        wtag = str(w) if w else "full"
        drv = {"return": "", "range": "-Range", "rv": "-RV"}[self.driver]
        if self.family == "HS":
            return f"HS-{wtag}"
        if self.family == "GaussianWindow":
            return f"Gaussian-{wtag}"
        if self.family == "EWMA":
            return "EWMA"
        if self.family in ("GARCH", "GJR"):
            return f"{self.family}{drv}-{self.dist}-{self.tail}"
        if self.family == "CAViaR":
            es = "Mult" if self.es_form == "multiplicative" else "Add"
            return f"CAViaR{drv}-{self.caviar_form}-{es}"
        return f"CARE{drv}-{self.caviar_form}"


def standard_specs(windows=(100, 250, 500, FULL_WINDOW)) -> list[MethodSpec]:
    """The 90-method pool: HS, Gaussian, EWMA, GARCH/GJR, CAViaR and CARE variants."""
    out = [MethodSpec("HS", window=w) for w in windows]
    out += [MethodSpec("GaussianWindow", window=w) for w in windows]
    out.append(MethodSpec("EWMA"))
    for fam in ("GARCH", "GJR"):
        for drv in DRIVERS:
            for dist in DISTS:
                for tail in TAILS:
                    out.append(MethodSpec(fam, driver=drv, dist=dist, tail=tail))
    for drv in DRIVERS:
        for form in FORMS:
            for es in ES_FORMS:
                out.append(MethodSpec("CAViaR", driver=drv, caviar_form=form, es_form=es))
    for drv in DRIVERS:
        for form in FORMS:
            out.append(MethodSpec("CARE", driver=drv, caviar_form=form))
    return out


def parse_method_id(mid: str, est_window: int | None = None) -> MethodSpec:
    """Inverse of :meth:`MethodSpec.method_id` over the standard pool and HS/Gaussian windows."""
    head, _, rest = mid.partition("-")
    if head in ("HS", "Gaussian"):
        fam = "HS" if head == "HS" else "GaussianWindow"
        if rest == "full" or (est_window and rest == str(est_window)):
            return MethodSpec(fam, window=FULL_WINDOW)
        return MethodSpec(fam, window=int(rest))
    for spec in standard_specs():
        if spec.method_id(est_window) == mid:
            return spec
    raise ValueError(f"unknown method id {mid!r}")
