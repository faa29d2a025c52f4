"""Optional SVG figures of residual decay and limit trends."""

from __future__ import annotations

from pathlib import Path


def write_plots(out: Path, rows: list[dict]) -> list[Path]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    eps = [r["eps"] for r in rows[1:]]
    t1 = [1.0 + r["t"] for r in rows[1:]]
    written = []

    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(eps, [r["v_residual"] for r in rows[1:]], label="compact-frame residual")
    ax.set_xlabel("1 - b tau")
    ax.invert_xaxis()
    ax.legend()
    path = out / "residual_v.svg"
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(t1, [r["u_residual_l2"] for r in rows[1:]], label="L2")
    ax.loglog(t1, [r["u_residual_sup"] for r in rows[1:]], label="(1+t)^(N/2) sup")
    ax.set_xlabel("1 + t")
    ax.legend()
    path = out / "residual_u.svg"
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(5, 4))
    ax.semilogx(t1, [r["t_scaled_u_sup"] for r in rows[1:]], label="t^(N/2) sup|u|")
    ax.semilogx(t1, [r["log_scaled_v_sup"] for r in rows[1:]], label="|log(1-b tau)|^(N/2) sup|v|")
    ax.set_xlabel("1 + t")
    ax.legend()
    path = out / "limits.svg"
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    written.append(path)
    return written
