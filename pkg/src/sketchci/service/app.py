"""FastAPI service: sketch sessions, interval queries, experiments, theory.

Sessions live in process memory: build one by streaming tokens through the
warm-up pipeline (or import a saved snapshot), then query it repeatedly.
Frozen sketches are read-only, so concurrent queries are safe; the session
table itself is guarded by a lock.
"""

from __future__ import annotations

import base64
import threading
import uuid
from dataclasses import dataclass

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.responses import JSONResponse

from .. import theory
from ..conformal import (ConfidenceInterval, calibrate_pairs, dump_adaptive_model,
                         dump_quantile, predict_lower, predict_two_sided)
from ..errors import CalibrationError, CapacityError, ConfigurationError
from ..experiments import parse_config, rows_to_csv, run_experiment
from ..generators import PitmanYorSampler, ZipfSampler
from ..pipeline import (TrackedCounts, WarmupCounts, build_supervised, dump_counts,
                        load_counts, run_pipeline)
from ..sketch import CountMinSketch
from . import models


@dataclass
class _Session:
    sketch: CountMinSketch
    warmup: WarmupCounts
    tracked: TrackedCounts


def _theory_dispatch(op: str, args: dict) -> dict[str, float]:
    def num(key, target=float):
        if key not in args:
            raise ConfigurationError(f"theory op {op!r} needs argument {key!r}")
        return target(args[key])

    def probs(key="p"):
        raw = args.get(key)
        if isinstance(raw, str):
            raw = [v for v in raw.split(",") if v]
        if not isinstance(raw, (list, tuple)):
            raise ConfigurationError(f"{key!r} must be a list of probabilities")
        return theory.DiscreteDist(tuple(float(v) for v in raw))

    def atoms():
        raw = args.get("atoms")
        if isinstance(raw, str):
            raw = [v for v in raw.split(",") if v]
        if not isinstance(raw, (list, tuple)):
            raise ConfigurationError("'atoms' must be a list of atom indices")
        return tuple(int(v) for v in raw)

    if op == "cubic":
        return {"value": theory.unique_cubic(num("p"))}
    if op == "two_symbol":
        return {"value": theory.two_symbol_unique_pmf(num("p"), num("m", int))}
    if op == "gap_curve":
        return {"value": theory.gap_curve(num("delta"), num("m", int),
                                          num("m_prime", int))}
    if op == "law_gap":
        return {"value": theory.unique_law_gap(num("m", int), num("m_prime", int))}
    if op == "law_gap_limit":
        return {"value": theory.unique_law_gap_limit(num("ratio"))}
    if op == "coverage_floor":
        return {"value": theory.worst_case_unique_coverage(
            num("alpha"), num("ratio"), num("m", int))}
    if op == "stability_c":
        return {"value": theory.stability_threshold(num("m", int))}
    if op == "shift_contraction":
        tv_unique, tv_base = theory.shift_contraction(
            num("p"), num("p_prime"), num("m", int))
        return {"tv_unique": tv_unique, "tv_base": tv_base}
    if op == "set_pmf":
        return {"value": theory.unique_set_pmf(probs(), atoms(), num("m", int))}
    if op == "set_pmf_ie":
        return {"value": theory.unique_set_pmf_incl_excl(probs(), atoms(),
                                                         num("m", int))}
    if op == "element_pmf":
        return {"value": theory.unique_element_pmf(probs(), num("atom", int),
                                                   num("m", int))}
    raise ConfigurationError(f"unknown theory op {op!r}")


def _theory_csv(op: str, args: dict, outputs: dict[str, float]) -> str:
    def fmt(v):
        if isinstance(v, (list, tuple)):
            return "|".join(str(x) for x in v)
        return str(v)

    inputs = ";".join(f"{k}={fmt(v)}" for k, v in sorted(args.items()))
    if len(outputs) == 1:
        return f"{op},{inputs},{format(next(iter(outputs.values())), '.12g')}"
    return "\n".join(f"{op},{inputs},{name}={format(v, '.12g')}"
                     for name, v in outputs.items())


def create_app() -> FastAPI:
    app = FastAPI(title="sketchci", version="0.1.0")
    sessions: dict[str, _Session] = {}
    lock = threading.Lock()

    @app.exception_handler(ConfigurationError)
    @app.exception_handler(CalibrationError)
    @app.exception_handler(CapacityError)
    def _bad_request(request, exc):  # noqa: ARG001
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(ValueError)
    def _value_error(request, exc):  # noqa: ARG001
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    def _get(sketch_id: str) -> _Session:
        with lock:
            session = sessions.get(sketch_id)
        if session is None:
            raise HTTPException(status_code=404, detail=f"no sketch {sketch_id!r}")
        return session

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.post("/generate", response_model=models.GenerateResponse)
    def generate(req: models.GenerateRequest):
        rng = np.random.default_rng(req.seed)
        if req.family == "zipf":
            source = ZipfSampler(req.a)
        else:
            source = PitmanYorSampler(req.lam, req.sigma)
        return models.GenerateResponse(
            tokens=[str(t) for t in source.sample_n(rng, req.n)])

    def _register(session: _Session) -> models.SketchSummary:
        sketch_id = uuid.uuid4().hex[:12]
        with lock:
            sessions[sketch_id] = session
        return models.SketchSummary(
            sketch_id=sketch_id, kind=session.sketch.kind, d=session.sketch.depth,
            w=session.sketch.width, seed=session.sketch.family.seed,
            m_total=session.warmup.size + session.sketch.items,
            m0=session.warmup.size, m_sketched=session.sketch.items,
            distinct_warmup=len(session.warmup.counts))

    @app.post("/sketches", response_model=models.SketchSummary)
    def build_sketch(req: models.SketchRequest):
        sketch = CountMinSketch(req.kind, req.d, req.w, seed=req.seed)
        result = run_pipeline(req.tokens, req.m0, sketch)
        return _register(_Session(result.sketch, result.warmup, result.tracked))

    @app.post("/sketches/import", response_model=models.SketchSummary)
    def import_sketch(req: models.ImportRequest):
        sketch = CountMinSketch.from_bytes(base64.b64decode(req.snapshot_b64))
        warmup, tracked = load_counts(req.counts_tsv)
        return _register(_Session(sketch, warmup, tracked))

    @app.get("/sketches/{sketch_id}/export", response_model=models.ExportResponse)
    def export_sketch(sketch_id: str):
        session = _get(sketch_id)
        return models.ExportResponse(
            snapshot_b64=base64.b64encode(session.sketch.to_bytes()).decode("ascii"),
            counts_tsv=dump_counts(session.warmup, session.tracked))

    @app.delete("/sketches/{sketch_id}")
    def delete_sketch(sketch_id: str):
        with lock:
            if sessions.pop(sketch_id, None) is None:
                raise HTTPException(status_code=404, detail=f"no sketch {sketch_id!r}")
        return {"deleted": sketch_id}

    @app.post("/sketches/{sketch_id}/query", response_model=models.QueryResponse)
    def query(sketch_id: str, req: models.QueryRequest):
        session = _get(sketch_id)
        pairs = build_supervised(session.warmup, session.tracked, session.sketch)
        r_split, r_group = map(np.random.default_rng,
                               np.random.SeedSequence(req.seed).spawn(2))
        calibrated = calibrate_pairs(
            pairs, req.alpha, score_kind=req.score, regime=req.regime,
            freq_bins=req.L, m_prime=req.m_prime,
            n_train=None if req.m0_train < 0 else req.m0_train,
            rng=r_split, group_rng=r_group, m_cap=session.sketch.items,
            count_upper=session.warmup.size + session.sketch.items,
            two_sided=req.two_sided)

        out = []
        for token in req.tokens:
            if req.exact_warmup and token in session.warmup.counts:
                exact = session.warmup.get(token) + session.tracked.get(token)
                iv = ConfidenceInterval(exact, exact)
            elif req.two_sided:
                iv = predict_two_sided(token, session.sketch, session.warmup,
                                       calibrated.quantile,
                                       calibrated.upper_quantile, calibrated.model)
            else:
                iv = predict_lower(token, session.sketch, session.warmup,
                                   calibrated.quantile, model=calibrated.model)
            out.append(models.IntervalOut(
                token=token, lower=iv.lower, upper=iv.upper,
                bound=session.sketch.upper_bound(token),
                warmup=session.warmup.get(token)))
        q = calibrated.quantile
        calibration_b64 = model_b64 = None
        if req.return_calibration:
            calibration_b64 = base64.b64encode(dump_quantile(q)).decode("ascii")
            if calibrated.model is not None:
                model_b64 = base64.b64encode(
                    dump_adaptive_model(calibrated.model)).decode("ascii")
        return models.QueryResponse(
            intervals=out, threshold=q.threshold, sentinel=q.is_sentinel,
            upper_threshold=(calibrated.upper_quantile.threshold
                             if calibrated.upper_quantile else None),
            n_calibration=q.n_used, alpha=req.alpha, regime=req.regime,
            score=req.score, calibration_b64=calibration_b64, model_b64=model_b64)

    @app.post("/experiment", response_model=models.ExperimentResponse)
    def experiment(req: models.ExperimentRequest):
        cfg = parse_config(req.config_text)
        return models.ExperimentResponse(csv=rows_to_csv(run_experiment(cfg)))

    @app.post("/theory", response_model=models.TheoryResponse)
    def theory_eval(req: models.TheoryRequest):
        outputs = _theory_dispatch(req.op, req.args)
        return models.TheoryResponse(op=req.op, inputs=req.args, outputs=outputs,
                                     csv=_theory_csv(req.op, req.args, outputs))

    return app


app = create_app()
