"""Figures for the tabular command outputs (matplotlib, file output only)."""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .units import ValidationError  # noqa: E402

PLOT_KINDS = ("lifetimes", "levels", "coupling", "operating-point")


def _save(fig, path):
    fig.tight_layout()
    # fixed metadata keeps repeated renders byte-identical
    fig.savefig(path, dpi=120, metadata={"Software": None} if str(path).endswith(".png") else None)
    plt.close(fig)


def plot_table(kind: str, columns, rows, path) -> None:
    if kind not in PLOT_KINDS:
        raise ValidationError(f"no figure defined for {kind!r}; --plot works with {', '.join(PLOT_KINDS)}")
    cols = {c: [r[i] for r in rows] for i, c in enumerate(columns)}
    fig, ax = plt.subplots(figsize=(5.5, 4))
    if kind == "lifetimes":
        ax.semilogy(cols["eps"], cols["tau10_s"], "o-", label=r"$\tau_{10}$")
        ax.semilogy(cols["eps"], cols["tau21_s"], "s-", label=r"$\tau_{21}$")
        ax.set_xlabel(r"$\varepsilon$")
        ax.set_ylabel("lifetime (s)")
        ax.legend()
    elif kind == "levels":
        for c in ("E0_meV", "E1_meV", "E2_meV"):
            ax.plot(cols["eps"], cols[c], label=c.split("_")[0])
        ax.set_xlabel(r"$\varepsilon$")
        ax.set_ylabel("energy (meV)")
        ax.legend()
    elif kind == "coupling":
        for c, lab in (("g10_rad_s", r"$g^{10}$"), ("g21_rad_s", r"$g^{21}$"), ("J_rad_s", r"$|J|$")):
            y = [abs(v) for v in cols[c]]
            if any(v > 0 for v in y):
                ax.loglog(cols["R_nm"], y, "o-", label=lab)
        ax.set_xlabel("R (nm)")
        ax.set_ylabel("coupling (rad/s)")
        ax.legend()
    else:
        for q in sorted(set(cols["q"])):
            pts = [(r, t) for r, qq, t in zip(cols["R_nm"], cols["q"], cols["T_star_mK"])
                   if qq == q and not math.isnan(t)]
            if pts:
                ax.plot(*zip(*pts), "o-", label=f"q = {q:g}")
        ax.set_xlabel("R (nm)")
        ax.set_ylabel(r"$T^*$ (mK)")
        ax.legend()
    _save(fig, path)
