"""Regenerate the console test fixtures from the real labeling service.

Walks one full six-episode session (plus the interesting error responses)
against an in-process server and writes every HTTP exchange, in order, to
test/fixtures/. The console tests replay these verbatim, so every number
the UI shows is one the service actually produced.

Run from the repository root:

    python3 frontend/scripts/record_fixtures.py
"""

import json
from pathlib import Path

from fastapi.testclient import TestClient

from engagekit.classifiers import ClassifierSpec
from engagekit.service import (
    STATUS_RETRAINING,
    SessionManager,
    build_student_resources,
    create_app,
)
from engagekit.synthetic import generate_synthetic_dataset

OUT = Path(__file__).resolve().parent.parent / "test" / "fixtures"

SPEC = ClassifierSpec(family="random_forest", seed=4, trees=12)


def main():
    made = generate_synthetic_dataset(
        students=3,
        seconds_per_student=130,
        separation=3.0,
        subject_shift=2.0,
        noise=1.0,
        seed=5,
    )
    ds = made.dataset
    target = ds.students()[0]
    resources, truth = build_student_resources(
        ds, target, SPEC, features="attention", eval_fraction=0.5, seed=1
    )
    resources.model()
    manager = SessionManager({target: resources}, episodes=6, batch_size=10)
    client = TestClient(create_app(manager))

    exchanges = []

    def call(method, path, body=None):
        if method == "GET":
            resp = client.get(path)
        else:
            resp = client.post(path, json=body)
        exchanges.append(
            {
                "method": method,
                "path": path,
                "request": body,
                "status": resp.status_code,
                "response": resp.json(),
            }
        )
        return resp.json()

    created = call("POST", "/v1/sessions", {"student_id": target})
    token = created["token"]
    base = f"/v1/sessions/{token}"
    call("GET", base)  # the console's first fetch after the token is entered

    for episode in range(6):
        batch = call("GET", f"{base}/batch")
        ids = [item["pool_id"] for item in batch["batch"]]
        if episode == 0:
            # a deliberately wrong submission, so the tests can replay the
            # validation error and prove selections survive it
            call(
                "POST",
                f"{base}/labels",
                {"labels": [{"pool_id": 99000 + i, "level": "low"} for i in ids]},
            )
        call(
            "POST",
            f"{base}/labels",
            {
                "labels": [
                    {"pool_id": pid, "level": truth[pid].label} for pid in ids
                ]
            },
        )

    call("GET", base)
    call("GET", f"{base}/batch")  # completed session refuses a batch

    OUT.mkdir(parents=True, exist_ok=True)
    (OUT / "replay.json").write_text(json.dumps(exchanges, indent=2))

    missing = client.get("/v1/sessions/absent-token")
    (OUT / "not_found.json").write_text(
        json.dumps(
            {"status": missing.status_code, "response": missing.json()},
            indent=2,
        )
    )

    # a second session frozen mid-retrain, for the polling renderer
    snap = manager.create_session(target, token="poll-demo")
    live = manager._sessions["poll-demo"]
    live.status = STATUS_RETRAINING
    status_resp = client.get(f"/v1/sessions/{snap.token}")
    batch_resp = client.get(f"/v1/sessions/{snap.token}/batch")
    (OUT / "retraining.json").write_text(
        json.dumps(
            {
                "status": {
                    "status": status_resp.status_code,
                    "response": status_resp.json(),
                },
                "batch": {
                    "status": batch_resp.status_code,
                    "response": batch_resp.json(),
                },
            },
            indent=2,
        )
    )

    print(f"wrote {len(exchanges)} exchanges to {OUT}")


if __name__ == "__main__":
    main()
