"""Squeezing-dynamics overlay: trajectory ensemble against analytic curves."""

import argparse
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .csvio import SchemaError, fail, load_columns

ENSEMBLE_REQUIRED = ("t_Gamma", "xi2_gen_dB", "xi2_updown_dB", "e_fraction")
ENSEMBLE_OPTIONAL = ("xi2_gen_stderr_dB", "e_fraction_stderr", "xi2_s_dB")
ANALYTIC_REQUIRED = ("t_Gamma", "xi2_expansion_dB")
ANALYTIC_OPTIONAL = ("xi2_collective_dB",)


def render(ensemble_csv, output, analytic_csv=None, t_off=None):
    ens = load_columns(ensemble_csv, ENSEMBLE_REQUIRED, ENSEMBLE_OPTIONAL)
    t = ens["t_Gamma"]

    fig, (ax1, ax2) = plt.subplots(
        2, 1, figsize=(6.0, 6.5), sharex=True,
        gridspec_kw={"height_ratios": [2.2, 1.0]})

    ax1.plot(t, ens["xi2_gen_dB"], color="tab:blue", lw=1.8,
             label="trajectories (generalized)")
    if "xi2_gen_stderr_dB" in ens:
        err = ens["xi2_gen_stderr_dB"]
        ax1.fill_between(t, ens["xi2_gen_dB"] - err, ens["xi2_gen_dB"] + err,
                         color="tab:blue", alpha=0.25, lw=0)
    ax1.plot(t, ens["xi2_updown_dB"], color="tab:cyan", lw=1.2, ls="--",
             label="trajectories (shelf/ground)")
    if analytic_csv:
        ana = load_columns(analytic_csv, ANALYTIC_REQUIRED, ANALYTIC_OPTIONAL)
        ax1.plot(ana["t_Gamma"], ana["xi2_expansion_dB"], color="tab:red",
                 lw=1.5, label="analytics (expansion)")
        if "xi2_collective_dB" in ana:
            ax1.plot(ana["t_Gamma"], ana["xi2_collective_dB"], color="tab:red",
                     lw=1.2, ls=":", label="analytics (collective exact)")
    if t_off is not None:
        i = int(np.argmin(np.abs(t - t_off)))
        ax1.plot([t_off], [ens["xi2_gen_dB"][i]], marker="*", ms=14,
                 color="gold", mec="black", label="drive off", zorder=5)
        for ax in (ax1, ax2):
            ax.axvline(t_off, color="gray", lw=0.8, ls=":")
    ax1.set_ylabel(r"$10\log_{10}\xi^2$ (dB)")
    ax1.legend(fontsize=8)

    ax2.plot(t, ens["e_fraction"], color="tab:green", lw=1.5)
    if "e_fraction_stderr" in ens:
        ax2.fill_between(t, ens["e_fraction"] - ens["e_fraction_stderr"],
                         ens["e_fraction"] + ens["e_fraction_stderr"],
                         color="tab:green", alpha=0.25, lw=0)
    ax2.set_ylabel(r"excited fraction $\langle e \rangle$")
    ax2.set_xlabel(r"$\Gamma t$")

    fig.tight_layout()
    fig.savefig(output, dpi=160)
    plt.close(fig)
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        description="Overlay trajectory and analytic squeezing dynamics")
    parser.add_argument("--input", required=True, help="ensemble CSV path")
    parser.add_argument("--output", required=True, help="image file to write")
    parser.add_argument("--analytic", default=None,
                        help="analytic curve CSV (optional)")
    parser.add_argument("--t-off", type=float, default=None,
                        help="drive-off time for the marker")
    args = parser.parse_args(argv)
    try:
        return render(args.input, args.output, analytic_csv=args.analytic,
                      t_off=args.t_off)
    except (SchemaError, OSError) as exc:
        return fail(exc)


if __name__ == "__main__":
    sys.exit(main())
