from __future__ import annotations

import dataclasses
import statistics
from dataclasses import dataclass

from .metrics import MetricsReport, read_metrics_csv, write_metrics_csv
from .train import TrainConfig, _examples, evaluate, train


@dataclass
class AblationRun:
    mode: str
    seed: int
    report: MetricsReport

    @property
    def run_id(self) -> str:
        return f"{self.mode}-s{self.seed}"


@dataclass
class AblationTable:
    runs: list[AblationRun]
    n_classes: int

    def medians(self) -> dict[str, float]:
        modes = dict.fromkeys(r.mode for r in self.runs)
        return {m: statistics.median(r.report.uar for r in self.runs if r.mode == m) for m in modes}

    def rows(self) -> list[dict]:
        return [r.report.row(r.run_id, r.mode, r.seed) for r in self.runs]

    def write_csv(self, path) -> None:
        write_metrics_csv(path, self.rows(), self.n_classes)

    def format(self) -> str:
        lines = ["mode      " + "  ".join(f"seed {r.seed}" for r in self.runs if r.mode == self.runs[0].mode) + "  median"]
        meds = self.medians()
        for m in meds:
            uars = "  ".join(f"{r.report.uar:6.4f}" for r in self.runs if r.mode == m)
            lines.append(f"{m:<9} {uars}  {meds[m]:6.4f}")
        return "\n".join(lines)


def ablate(base: TrainConfig, modes, seeds, data=None, eval_data=None, out_csv=None) -> AblationTable:
    """Train and evaluate every (mode, seed) pair on the same corpus."""
    if not modes or not seeds:
        raise ValueError("ablate needs at least one mode and one seed")
    train_set = _examples(data if data is not None else base.train_data)
    eval_set = _examples(eval_data if eval_data is not None else base.eval_data) or train_set
    runs = []
    for mode in modes:
        for seed in seeds:
            cfg = dataclasses.replace(base, mode=mode, seed=int(seed), run_id=f"{mode}-s{seed}")
            result = train(cfg, train_set, eval_set)
            if result.metrics:
                report = result.metrics[-1]
            else:
                report = evaluate(result.checkpoint, eval_set, batch_size=cfg.batch_size)
            runs.append(AblationRun(mode, int(seed), report))
    table = AblationTable(runs, base.model.n_emotions)
    if out_csv is not None:
        table.write_csv(out_csv)
    return table


def read_ablation_csv(path) -> list[dict]:
    return read_metrics_csv(path)
