#!/usr/bin/env python3
"""Run the gateway against a fully mocked model stack, for local demos.

Spins up ten canned specialist backends, an echoing orchestrator and
reformulator, trains the built-in scorer on a small synthetic corpus, and
serves the gateway on 127.0.0.1:8080. If frontend/dist exists the web
console is served at / on the same port.

    python3 scripts/run_mock_stack.py [--port 8080]
"""

import argparse
import random
import tempfile
from pathlib import Path

import uvicorn

from medroute.conversation import ReformulatorConfig
from medroute.core import QAExample, Strategy, default_label_registry
from medroute.config import GatewayConfig
from medroute.gateway import create_app
from medroute.model_client import MockBehavior, spawn_mock_backend
from medroute.orchestrator import OrchestratorConfig
from medroute.router import ScorerSpec, train_builtin_scorer
from medroute.specialists import SpecialistConfig

KEYWORDS = {
    "cardiology_hematology": ["cuore", "palpitazioni", "anemia", "pressione"],
    "dermatology_aesthetics": ["pelle", "eruzione", "acne", "neo"],
    "eye_ent_pulmonology": ["occhio", "udito", "tosse", "respiro"],
    "gastroenterology": ["stomaco", "intestino", "digestione", "nausea"],
    "general_medicine_surgery": ["febbre", "chirurgia", "stanchezza", "infezione"],
    "gynecology": ["ciclo", "gravidanza", "ovaie", "menopausa"],
    "mental_health": ["ansia", "depressione", "panico", "insonnia"],
    "neurology": ["emicrania", "vertigini", "formicolio", "memoria"],
    "orthopedics": ["ginocchio", "schiena", "frattura", "spalla"],
    "urology_andrology": ["vescica", "prostata", "reni", "minzione"],
}


def demo_corpus(n_per_label: int = 30, seed: int = 0) -> list[QAExample]:
    rng = random.Random(seed)
    fillers = ["salve", "ho", "un", "problema", "di", "da", "giorni", "dottore"]
    out = []
    for label in default_label_registry():
        for i in range(n_per_label):
            words = KEYWORDS[label.id]
            question = " ".join(
                [rng.choice(fillers), rng.choice(words), rng.choice(words), rng.choice(fillers)]
            )
            out.append(
                QAExample(
                    question=question,
                    reference_answer=f"consulto di {label.display_name}",
                    gold_labels=frozenset({label}),
                )
            )
    return out


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--port", type=int, default=8080)
    args = parser.parse_args()

    print("training built-in scorer on the demo corpus ...")
    model = train_builtin_scorer(demo_corpus(), buckets=1 << 14, epochs=4, seed=0)
    artifact = Path(tempfile.mkdtemp(prefix="medroute-demo-")) / "scorer.json"
    model.save(artifact)

    specialists = {}
    for label in default_label_registry():
        mock = spawn_mock_backend(
            MockBehavior(
                default_reply=(
                    f"[mock {label.display_name}] Based on the described symptoms, "
                    f"here is guidance from the {label.display_name} perspective."
                ),
                injected_delay_ms=150,
            )
        )
        specialists[label.id] = SpecialistConfig(
            specialty=label,
            endpoint=mock.endpoint,
            model_id=f"mock-{label.id}",
            timeout_ms=10_000,
        )
        print(f"  specialist {label.id:<26} -> {mock.endpoint}")

    orchestrator_mock = spawn_mock_backend(MockBehavior(injected_delay_ms=200))
    reformulator_mock = spawn_mock_backend(MockBehavior())
    print(f"  orchestrator (echo)          -> {orchestrator_mock.endpoint}")
    print(f"  reformulator (echo)          -> {reformulator_mock.endpoint}")

    config = GatewayConfig(
        listen=f"127.0.0.1:{args.port}",
        scorer=ScorerSpec(kind="builtin_linear", model_artifact_path=str(artifact)),
        strategy=Strategy.top_n(2),
        specialists=specialists,
        orchestrator=OrchestratorConfig(
            endpoint=orchestrator_mock.endpoint, model_id="mock-orchestrator"
        ),
        reformulator=ReformulatorConfig(
            endpoint=reformulator_mock.endpoint, model_id="mock-reformulator"
        ),
    )
    app = create_app(config)

    frontend = Path(__file__).resolve().parent.parent / "frontend"
    if (frontend / "dist" / "main.js").exists():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=frontend, html=True), name="console")
        print(f"console: http://127.0.0.1:{args.port}/")
    else:
        print("console not built (run `npm run build` in frontend/); API only")
    print(f"gateway: http://127.0.0.1:{args.port}/v1/  (Ctrl-C to stop)")
    uvicorn.run(app, host="127.0.0.1", port=args.port, log_level="warning")


if __name__ == "__main__":
    main()
