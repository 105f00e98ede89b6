"""Two-panel optimal-squeezing heatmap from a scan CSV."""

import argparse
import json
import os
import sys

import matplotlib

matplotlib.use("Agg")  # file output only; no display needed
import matplotlib.pyplot as plt
import numpy as np

from .csvio import SchemaError, fail, load_columns

REQUIRED = ("delta_over_NGamma", "cos_theta", "xi2_opt_dB", "t_opt_Gamma")

ANCHOR_MARKERS = {"diamond": "D", "square": "s", "circle": "o",
                  "triangle": "^", "star": "*"}


def _to_grid(cols):
    deltas = np.unique(cols["delta_over_NGamma"])
    cosths = np.unique(cols["cos_theta"])
    shape = (len(deltas), len(cosths))
    if shape[0] * shape[1] != len(cols["xi2_opt_dB"]):
        raise SchemaError("scan rows do not fill a rectangular grid")
    xi2 = np.full(shape, np.nan)
    topt = np.full(shape, np.nan)
    di = {v: i for i, v in enumerate(deltas)}
    cj = {v: j for j, v in enumerate(cosths)}
    for d, c, x, t in zip(cols["delta_over_NGamma"], cols["cos_theta"],
                          cols["xi2_opt_dB"], cols["t_opt_Gamma"]):
        xi2[di[d], cj[c]] = x
        topt[di[d], cj[c]] = t
    return deltas, cosths, xi2, topt


def render(input_csv, output, summary_json=None, vmin=-26.0, vmax=0.0,
           annotate=True):
    cols = load_columns(input_csv, REQUIRED)
    deltas, cosths, xi2, topt = _to_grid(cols)

    fig, axes = plt.subplots(2, 1, figsize=(6.0, 7.5), sharex=True)
    extent = None
    x = cosths
    y = deltas
    for ax, grid, label, kw in (
            (axes[0], xi2, r"optimal squeezing $10\log_{10}\xi^2$ (dB)",
             dict(vmin=vmin, vmax=vmax, cmap="viridis")),
            (axes[1], np.log10(topt), r"optimal time $\log_{10}(\Gamma t)$",
             dict(cmap="magma"))):
        masked = np.ma.masked_invalid(grid)
        mesh = ax.pcolormesh(x, y, masked, shading="nearest", **kw)
        ax.set_yscale("log")
        ax.set_ylabel(r"$\delta / N\Gamma$")
        fig.colorbar(mesh, ax=ax, label=label)
    axes[1].set_xlabel(r"$\cos\tilde\theta$")

    if summary_json and os.path.exists(summary_json):
        with open(summary_json) as fh:
            summary = json.load(fh)
        overlay = np.asarray(summary.get("overlay_delta_over_NGamma", []),
                             dtype=float)
        if len(overlay) == len(cosths):
            for ax in axes:
                ax.plot(cosths, overlay, "k-", lw=1.5,
                        label="optimal detuning")
            axes[0].legend(loc="upper left", fontsize=8)
        if annotate:
            for a in summary.get("anchors", []):
                marker = ANCHOR_MARKERS.get(a.get("symbol", ""), "x")
                for ax in axes:
                    ax.plot(a["cos_theta"], a["delta_over_NGamma"], marker,
                            color="white", mec="black", ms=9)

    fig.tight_layout()
    fig.savefig(output, dpi=160)
    plt.close(fig)
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        description="Render the optimal-squeezing heatmap from a scan CSV")
    parser.add_argument("--input", required=True, help="scan CSV path")
    parser.add_argument("--output", required=True, help="image file to write")
    parser.add_argument("--summary", default=None,
                        help="scan summary JSON with overlay and anchors")
    parser.add_argument("--vmin", type=float, default=-26.0)
    parser.add_argument("--vmax", type=float, default=0.0)
    parser.add_argument("--no-annotations", action="store_true")
    args = parser.parse_args(argv)
    try:
        return render(args.input, args.output, summary_json=args.summary,
                      vmin=args.vmin, vmax=args.vmax,
                      annotate=not args.no_annotations)
    except (SchemaError, OSError) as exc:
        return fail(exc)


if __name__ == "__main__":
    sys.exit(main())
