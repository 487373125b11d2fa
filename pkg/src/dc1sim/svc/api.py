"""HTTP API over the campaign state machine, versioned under /v1.

Every module error surfaces as a structured body
``{"error": {"code": ..., "message": ...}}`` with a machine-readable code.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from dc1sim import catalogs as cat
from dc1sim import farm
from dc1sim import vdc as vdcmod
from dc1sim.svc.campaign import Campaign

_ERROR_STATUS = {
    "duplicate_transformation": 409,
    "duplicate_replica": 409,
    "replica_exists": 409,
    "schema_violation": 422,
    "unknown_transformation": 404,
    "unknown_dataset": 404,
    "unknown_file": 404,
    "unknown_site": 404,
    "unknown_agent": 404,
    "unknown_invocation": 404,
    "missing_source": 404,
    "deadlock": 409,
}


def _error_code(exc: Exception) -> str:
    name = type(exc).__name__
    if name.endswith("Error"):
        name = name[:-5]
    # CamelCase -> snake_case
    out = []
    for ch in name:
        if ch.isupper() and out:
            out.append("_")
        out.append(ch.lower())
    return "".join(out)


class TransformationBody(BaseModel):
    name: str
    version: str
    stage: str
    parameter_schema: list  # [name, type, required] triples
    default_timeout: float = vdcmod.DEFAULT_TIMEOUT


class DerivationBody(BaseModel):
    transformation_id: int
    bindings: dict
    outputs: list[str]
    inputs: list[str] = []
    priority: int = 0
    timeout: Optional[float] = None


class DatasetBody(BaseModel):
    attributes: dict


class ReplicaBody(BaseModel):
    lfn: str
    site: str
    store: str = "disk"


class PlanBody(BaseModel):
    sites: list
    datasets: list
    faults: list = []
    seed: int = 0


class RunBody(BaseModel):
    seed: int = 0


class PriorityBody(BaseModel):
    priority: str


class ValidationBody(BaseModel):
    reference: str  # partition file path
    candidate: str
    spec: str  # histogram spec file path
    threshold: Optional[float] = None


def create_app(campaign: Campaign,
               static_dir: Optional[Path] = None) -> FastAPI:
    app = FastAPI(title="dc1 production service", version="1")

    @app.exception_handler(Exception)
    async def _handle(request: Request, exc: Exception):
        known = (vdcmod.VdcError, cat.CatalogError, farm.FarmError,
                 ValueError, KeyError, FileNotFoundError)
        if not isinstance(exc, known):
            raise exc
        code = _error_code(exc)
        status = _ERROR_STATUS.get(code, 400)
        return JSONResponse(status_code=status,
                            content={"error": {"code": code,
                                               "message": str(exc)}})

    @app.post("/v1/transformations")
    def post_transformation(body: TransformationBody):
        t = vdcmod.Transformation(
            body.name, body.version, body.stage,
            tuple(vdcmod.ParamSpec(n, ty, req)
                  for n, ty, req in body.parameter_schema),
            body.default_timeout)
        return {"transformation_id": campaign.vdc.register_transformation(t)}

    @app.post("/v1/derivations")
    def post_derivation(body: DerivationBody):
        d = campaign.vdc.derive(body.transformation_id, body.bindings,
                                body.outputs, body.inputs, body.priority,
                                body.timeout)
        return {"derivation_id": d.derivation_id, "status": d.status}

    @app.post("/v1/derivations/{derivation_id}/retry")
    def post_retry(derivation_id: int):
        campaign.retry_derivation(derivation_id)
        return {"derivation_id": derivation_id, "status": "retried"}

    @app.post("/v1/datasets")
    def post_dataset(body: DatasetBody):
        return {"dataset_id": campaign.metadata.register_dataset(body.attributes)}

    @app.get("/v1/datasets")
    def get_datasets(query: str = ""):
        # query syntax: key=value,key>value,... (conjunction)
        terms = []
        for part in filter(None, query.split(",")):
            for op in ("!=", "=", "<", ">"):
                if op in part:
                    key, value = part.split(op, 1)
                    try:
                        value = int(value)
                    except ValueError:
                        pass
                    terms.append((key, op, value))
                    break
        return {"lfns": campaign.metadata.query_files(terms)}

    @app.patch("/v1/datasets/{dataset_id}/priority")
    def patch_priority(dataset_id: int, body: PriorityBody):
        campaign.set_dataset_priority(dataset_id, body.priority)
        return {"dataset_id": dataset_id, "priority": body.priority}

    @app.get("/v1/files/{lfn:path}")
    def get_file(lfn: str):
        bindings = lambda did: campaign.vdc.derivations[did].bindings \
            if did in campaign.vdc.derivations else {}
        return campaign.metadata.describe_file(lfn, bindings)

    @app.post("/v1/replicas")
    def post_replica(body: ReplicaBody):
        pfn = campaign.replicas.register_replica(body.lfn, body.site,
                                                 body.store)
        return {"lfn": body.lfn, "site": body.site, "pfn": pfn}

    @app.get("/v1/replicas/{lfn:path}")
    def get_replicas(lfn: str):
        return {"replicas": [
            {"lfn": r.lfn, "site": r.site, "pfn": r.pfn, "store": r.store}
            for r in campaign.replicas.locate(lfn)]}

    @app.post("/v1/plans")
    def post_plan(body: PlanBody):
        plan = farm.ProductionPlan(
            sites=[farm.Site(s["name"], s["processors"],
                             s["ncu_per_processor"],
                             s.get("bandwidth_mb_s", 100.0))
                   for s in body.sites],
            datasets=[farm.DatasetSpec(
                dataset_id=d["dataset_id"], process=d["process"],
                events=d["events"], partitions=d.get("partitions", 1),
                stage=d.get("stage", "simulate"), lumi=d.get("lumi", "low"),
                priority=d.get("priority", "high"),
                group_in_charge=d.get("group_in_charge", "production"),
                inputs_from=d.get("inputs_from"))
                for d in body.datasets],
            faults=[farm.Fault(f["time"], f["agent"], f["kind"])
                    for f in body.faults],
            seed=body.seed)
        return {"plan_id": campaign.create_plan(plan)}

    @app.post("/v1/plans/{plan_id}/run")
    def post_run(plan_id: int, body: RunBody = RunBody()):
        state = campaign.run_plan(plan_id, seed=body.seed)
        return {"plan_id": plan_id, "state": state.state}

    @app.post("/v1/plans/{plan_id}/pause")
    def post_pause(plan_id: int):
        state = campaign.pause_plan(plan_id)
        return {"plan_id": plan_id, "state": state.state}

    @app.get("/v1/plans/{plan_id}")
    def get_plan(plan_id: int):
        state = campaign.plans[plan_id]
        out = {"plan_id": plan_id, "state": state.state, "error": state.error}
        if state.simulator is not None:
            out["report"] = state.simulator.report().to_dict()
        return out

    @app.get("/v1/progress")
    def get_progress():
        return campaign.progress()

    @app.post("/v1/validations")
    def post_validation(body: ValidationBody):
        from dc1sim import core, validate
        ref = core.read_partition(body.reference).body
        cand = core.read_partition(body.candidate).body
        specs = validate.parse_spec_file(body.spec)
        threshold = (body.threshold if body.threshold is not None
                     else campaign.config.default_validation_threshold)
        report = validate.validate_site(cand, ref, specs, threshold).to_dict()
        vid = campaign.store_validation(report)
        return {"validation_id": vid, **report}

    @app.get("/v1/validation/{validation_id}")
    def get_validation(validation_id: int):
        if validation_id not in campaign.validations:
            return JSONResponse(status_code=404, content={
                "error": {"code": "unknown_validation",
                          "message": str(validation_id)}})
        return campaign.validations[validation_id]

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=static_dir, html=True),
                  name="console")
    return app
