"""
有限差分による勾配検証

中心差分（h=1e-4, float64）と自動微分の勾配を要素ごとに比較する。
片側差分が食い違う点（relu の折れ点など）はキンクとして除外する。
"""
from dataclasses import dataclass, field
from typing import Callable, List, Tuple

import numpy as np

from src.nn_core.tensor import Tensor


@dataclass
class GradCheckReport:
    """勾配検証結果"""
    name: str
    max_rel_error: float
    tol: float
    n_checked: int
    kink_indices: List[Tuple[int, ...]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tol

    def summary(self) -> str:
        mark = "✅" if self.passed else "❌"
        return (f"{mark} {self.name}: max_rel_err={self.max_rel_error:.3e} "
                f"(tol={self.tol:.0e}, checked={self.n_checked}, kinks={len(self.kink_indices)})")


def _scalar(f: Callable[[], Tensor]) -> float:
    out = f()
    return float(np.asarray(out.data if isinstance(out, Tensor) else out).reshape(-1)[0])


def finite_diff_check(
    f: Callable[[], Tensor],
    x: Tensor,
    tol: float = 1e-4,
    h: float = 1e-4,
    name: str = "",
) -> GradCheckReport:
    """
    スカラー関数 f の x に関する勾配を検証する

    Args:
        f: 引数なしでスカラー Tensor を返す関数（x を内部で参照する）
        x: 検証対象の葉テンソル（requires_grad=True）
        tol: 相対誤差の許容値
        h: 差分ステップ

    Returns:
        GradCheckReport（max_rel_error はキンク点を除いた最大相対誤差）

    相対誤差の分母は max(|解析|, |数値|, 1e-3)。
    """
    x.requires_grad = True
    x.grad = None
    out = f()
    out.backward()
    analytic = np.zeros_like(x.data) if x.grad is None else x.grad.copy()
    x.grad = None

    max_err = 0.0
    kinks: List[Tuple[int, ...]] = []
    n_checked = 0
    for idx in np.ndindex(x.shape):
        orig = x.data[idx]
        x.data[idx] = orig + h
        f_plus = _scalar(f)
        x.data[idx] = orig - h
        f_minus = _scalar(f)
        x.data[idx] = orig
        f_0 = _scalar(f)

        forward_d = (f_plus - f_0) / h
        backward_d = (f_0 - f_minus) / h
        numeric = (f_plus - f_minus) / (2.0 * h)

        # 片側差分が大きく食い違えば微分不可能点とみなす
        scale = max(abs(forward_d), abs(backward_d), 1e-3)
        if abs(forward_d - backward_d) / scale > 0.1 and abs(forward_d - backward_d) > 1e-3:
            kinks.append(idx)
            continue

        a = analytic[idx]
        rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-3)
        max_err = max(max_err, rel)
        n_checked += 1

    return GradCheckReport(name=name or "f", max_rel_error=float(max_err), tol=tol,
                           n_checked=n_checked, kink_indices=kinks)
