"""
Run report generation

Collects the artifacts of a run directory into one HTML page: training,
bias adjustment, RFE path, verification and coefficient comparison, plus the
optimizer memory estimate for the configured qubit count.
"""
import csv
import io
import logging
from typing import Any, Dict, List, Optional, Tuple

from jinja2 import Template

from src.mso import estimate_memory_bytes
from src.run_storage import (
    COMPARISON_CSV,
    MANIFEST,
    MSO_TRACE,
    REPORT,
    RFE_TRACE,
    VERIFICATION,
    WITNESS_ADJUSTED,
    WITNESS_TRAINED,
    RunStore,
)

logger = logging.getLogger(__name__)

# (section title, artifacts it needs)
REPORT_SECTIONS: List[Tuple[str, Tuple[str, ...]]] = [
    ("training", (WITNESS_TRAINED,)),
    ("adjustment", (WITNESS_ADJUSTED, MSO_TRACE)),
    ("rfe", (RFE_TRACE,)),
    ("verification", (VERIFICATION,)),
    ("comparison", (COMPARISON_CSV,)),
]


REPORT_TEMPLATE = """
<!DOCTYPE html>
<html lang="en">
<head>
    <meta charset="UTF-8">
    <title>wforge run report{% if config %} - {{ config.target | upper }}-{{ config.n_qubits }}{% endif %}</title>
    <style>
        :root {
            --bg-primary: #ffffff;
            --bg-secondary: #f4f5f7;
            --text-primary: #1d1f23;
            --text-muted: #6b7280;
            --border-color: #d8dbe0;
            --ok: #1a7f37;
            --bad: #cf222e;
        }
        body { font-family: -apple-system, BlinkMacSystemFont, "Segoe UI", sans-serif;
               background: var(--bg-primary); color: var(--text-primary); margin: 2rem auto; max-width: 960px; }
        h1 { font-size: 1.6rem; }
        h2 { font-size: 1.2rem; border-bottom: 1px solid var(--border-color); padding-bottom: .3rem; margin-top: 2rem; }
        table { border-collapse: collapse; width: 100%; margin: .5rem 0 1rem; font-size: .9rem; }
        th, td { border: 1px solid var(--border-color); padding: .3rem .6rem; text-align: right; }
        th { background: var(--bg-secondary); }
        td.label, th.label { text-align: left; font-family: monospace; }
        .muted { color: var(--text-muted); }
        .ok { color: var(--ok); font-weight: 600; }
        .bad { color: var(--bad); font-weight: 600; }
        .missing { background: var(--bg-secondary); padding: .5rem 1rem; border-left: 4px solid var(--bad); }
    </style>
</head>
<body>
    <h1>wforge run report</h1>
    <p class="muted">{{ run_dir }}</p>
    {% if config %}
    <table>
        <tr><th class="label">Target</th><td class="label">{{ config.target }}</td>
            <th class="label">Qubits</th><td>{{ config.n_qubits }}</td>
            <th class="label">Seed</th><td>{{ config.seed }}</td></tr>
    </table>
    {% endif %}
    <p>Config digest: <code>{{ config_digest or "unknown" }}</code></p>
    {% if memory_bytes %}
    <p>Estimated optimizer memory for N={{ config.n_qubits }}: {{ "%.3g"|format(memory_bytes) }} bytes
       ({{ "%.3g"|format(memory_bytes / 1073741824) }} GiB)</p>
    {% endif %}
    {% if missing %}
    <div class="missing">
        <strong>Missing artifacts:</strong>
        <ul>{% for name in missing %}<li><code>{{ name }}</code></li>{% endfor %}</ul>
    </div>
    {% endif %}

    <h2>Training</h2>
    {% if trained %}
    <p>{{ trained.terms | length }} terms, bias {{ "%.6f"|format(trained.bias) }}.</p>
    <table>
        <tr><th class="label">Term</th><th>Coefficient</th></tr>
        {% for label, coeff in trained.terms %}
        <tr><td class="label">{{ label }}</td><td>{{ "%.6f"|format(coeff) }}</td></tr>
        {% endfor %}
    </table>
    {% else %}<p class="muted">Not run.</p>{% endif %}

    <h2>Bias adjustment</h2>
    {% if adjustment %}
    <p>Bias {{ "%.6f"|format(adjustment.bias_before) }} &rarr; {{ "%.6f"|format(adjustment.bias_after) }}
       (separable minimum {{ "%.6g"|format(adjustment.min_expectation) }}).</p>
    <table>
        <tr><th>Restart</th><th>Iterations</th><th>First loss</th><th>Best loss</th></tr>
        {% for row in adjustment.restarts %}
        <tr><td>{{ row.restart }}</td><td>{{ row.iterations }}</td>
            <td>{{ "%.6f"|format(row.first) }}</td><td>{{ "%.6f"|format(row.best) }}</td></tr>
        {% endfor %}
    </table>
    {% else %}<p class="muted">Not run.</p>{% endif %}

    <h2>Recursive feature elimination</h2>
    {% if rfe %}
    <p>Stopped: {{ rfe.stop_reason }}.
       {% if rfe.monotone %}<span class="ok">Noise tolerance never decreased.</span>
       {% else %}<span class="bad">Noise tolerance decreased along the path.</span>{% endif %}</p>
    <table>
        <tr><th>Terms</th><th class="label">Removed</th><th>Candidate p*</th><th>Adjusted p*</th><th>Wall time (s)</th></tr>
        {% for level in rfe.levels %}
        <tr><td>{{ level.term_count }}</td><td class="label">{{ level.removed }}</td>
            <td>{{ "%.4f"|format(level.best_tolerance) }}</td>
            <td>{% if level.adjusted_tolerance is not none %}{{ "%.4f"|format(level.adjusted_tolerance) }}{% else %}&ndash;{% endif %}</td>
            <td>{{ "%.2f"|format(level.wall_time) }}</td></tr>
        {% endfor %}
    </table>
    {% else %}<p class="muted">Not run.</p>{% endif %}

    <h2>Verification</h2>
    {% if verification %}
    <p>{% if verification.is_valid %}<span class="ok">All test states classified correctly.</span>
       {% else %}<span class="bad">Misclassifications found.</span>{% endif %}</p>
    <table>
        <tr><th class="label">Class</th><th>Count</th><th>Min</th><th>Max</th><th>Misclassified</th></tr>
        {% for name in ["separable", "entangled"] %}
        {% set stats = verification[name] %}
        <tr><td class="label">{{ name }}</td><td>{{ stats.count }}</td>
            <td>{{ "%.6g"|format(stats.min_expectation) }}</td><td>{{ "%.6g"|format(stats.max_expectation) }}</td>
            <td>{{ stats.misclassified }}</td></tr>
        {% endfor %}
    </table>
    {% else %}<p class="muted">Not run.</p>{% endif %}

    <h2>Coefficient comparison</h2>
    {% if comparison %}
    <table>
        <tr><th class="label">Feature</th><th>Reference</th><th>Witness</th><th>Percent error</th></tr>
        {% for row in comparison %}
        <tr><td class="label">{{ row.feature }}</td><td>{{ row.reference_coefficient }}</td>
            <td>{{ row.witness_coefficient }}</td><td>{{ row.percent_error }}</td></tr>
        {% endfor %}
    </table>
    {% else %}<p class="muted">Not run.</p>{% endif %}
</body>
</html>
"""


class ReportGenerator:
    """Renders a run directory into report.html"""

    def __init__(self, store: RunStore):
        self._store = store

    def missing_artifacts(self) -> List[str]:
        return [
            key
            for _, keys in REPORT_SECTIONS
            for key in keys
            if not self._store.exists(key)
        ]

    def collect(self) -> Dict[str, Any]:
        """Template context built from whatever artifacts exist."""
        manifest = self._store.get_json(MANIFEST) or {}
        config = manifest.get("config")
        memory_bytes = None
        if config and config.get("n_qubits", 0) >= 2:
            memory_bytes = estimate_memory_bytes(config["n_qubits"])
        return {
            "run_dir": str(self._store.root),
            "config": config,
            "config_digest": manifest.get("config_digest"),
            "memory_bytes": memory_bytes,
            "missing": self.missing_artifacts(),
            "trained": self._witness_summary(WITNESS_TRAINED),
            "adjustment": self._adjustment_summary(),
            "rfe": self._store.get_json(RFE_TRACE),
            "verification": self._store.get_json(VERIFICATION),
            "comparison": self._csv_rows(COMPARISON_CSV),
        }

    def render(self, context: Dict[str, Any]) -> str:
        template = Template(REPORT_TEMPLATE)
        return template.render(**context)

    def generate(self) -> Tuple[str, List[str]]:
        """Write report.html; returns (path, missing artifact keys)."""
        context = self.collect()
        self._store.set_text(REPORT, self.render(context), command="report")
        if context["missing"]:
            logger.warning("Report written with %d missing artifacts", len(context["missing"]))
        return str(self._store.path(REPORT)), context["missing"]

    def _witness_summary(self, key: str) -> Optional[Dict[str, Any]]:
        data = self._store.get_json(key)
        if data is None:
            return None
        terms = [(t["pauli"], t["coeff"]) for t in data["terms"]]
        bias = next((c for p, c in terms if set(p) == {"I"}), 0.0)
        return {"terms": terms, "bias": bias, "metadata": data.get("metadata", {})}

    def _adjustment_summary(self) -> Optional[Dict[str, Any]]:
        adjusted = self._store.get_json(WITNESS_ADJUSTED)
        rows = self._csv_rows(MSO_TRACE)
        if adjusted is None or rows is None:
            return None
        metadata = adjusted.get("metadata", {})
        restarts: Dict[int, List[float]] = {}
        for row in rows:
            restarts.setdefault(int(row["restart_index"]), []).append(float(row["loss"]))
        bias_after = next((t["coeff"] for t in adjusted["terms"] if set(t["pauli"]) == {"I"}), 0.0)
        return {
            "bias_after": bias_after,
            "bias_before": bias_after - metadata.get("bias_adjustment", 0.0),
            "min_expectation": metadata.get("mso_min_expectation", 0.0),
            "restarts": [
                {"restart": r, "iterations": len(v), "first": v[0], "best": min(v)}
                for r, v in sorted(restarts.items())
            ],
        }

    def _csv_rows(self, key: str) -> Optional[List[Dict[str, str]]]:
        data = self._store.get(key)
        if data is None:
            return None
        return list(csv.DictReader(io.StringIO(data.decode("utf-8"))))


def get_report_generator(store: RunStore) -> ReportGenerator:
    """Return a report generator for a run directory"""
    return ReportGenerator(store)
