from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class FitReport:
    loss_curve: list
    final_mse: float
    final_psnr: float
    final_ssim: float
    wall_time: float
    kernel: str
    n: int
    l1_curve: list = field(default_factory=list)
    dssim_curve: list = field(default_factory=list)
    psnr_curve: list = field(default_factory=list)
    per_view_psnr: list = field(default_factory=list)

    def rows(self):
        """Rows for the ``iter,loss,l1,dssim,psnr`` report."""
        nan = float("nan")
        out = []
        for i, loss in enumerate(self.loss_curve):
            out.append((
                i,
                loss,
                self.l1_curve[i] if i < len(self.l1_curve) else nan,
                self.dssim_curve[i] if i < len(self.dssim_curve) else nan,
                self.psnr_curve[i] if i < len(self.psnr_curve) else nan,
            ))
        return out

    @property
    def initial_loss(self):
        return self.loss_curve[0] if self.loss_curve else float("nan")


REPORT_HEADER = ("iter", "loss", "l1", "dssim", "psnr")


def psnr_from_mse(err):
    return float("inf") if err <= 0 else float(10 * np.log10(1.0 / err))
