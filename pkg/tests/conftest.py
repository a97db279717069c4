"""Shared fixtures: a synthetic pre-writing bundle and scripted provider
transports that stand in for the live services during record/replay tests.

The scripted transports are pure functions of the request, so recording them
once and replaying twice must reproduce byte-identical artifacts.
"""

from __future__ import annotations

import json
import re
from datetime import date
from pathlib import Path

import pytest

from paperforge.providers import CompletionRequest, IndexRecord

import oracles

# ---------------------------------------------------------------------------
# input bundle fixture
# ---------------------------------------------------------------------------

IDEA_MD = """## Problem Statement

Dense transformer stacks spend identical compute on every token even though
most tokens are easy. We will study conditional routing that activates a small
subset of expert blocks per token, keeping quality while cutting inference
cost on commodity accelerators.

## Core Hypothesis

A learned router trained jointly with a load-balancing objective can pick one
of several lightweight expert blocks per token. We believe the router can be
regularized so that expert utilization stays near-uniform, which avoids the
collapse failure mode where one expert absorbs all traffic.

## Proposed Methodology (High-Level Technical Approach)

We will wrap each feed-forward block with a gating module that scores experts
from the token representation. The top-scoring expert runs; the others stay
idle. A utilization penalty discourages routing collapse. We will distill the
dense model into the routed model to stabilize early training, then anneal the
distillation weight to zero.

## Expected Contribution

A recipe for converting dense checkpoints into conditionally routed models
with near-dense quality at a fraction of the inference cost, plus an analysis
of the router's failure modes under distribution shift.
"""

LOG_MD = """# Experimental Log

## 1. Experimental Setup

* Datasets: a held-out web-text validation corpus and three reasoning suites.
* Evaluation metrics: validation accuracy, mean latency per token, expert
  utilization entropy.
* Baselines compared: the dense backbone and a magnitude-pruned variant.
* Optimizer: decoupled weight decay, initial learning rate 0.0003, batch 256.
* Hardware: eight commodity accelerators in one node.

## 2. Raw Numeric Data (from Tables)

We measured final validation accuracy (percent):

* Dense backbone: 84.3
* Magnitude-pruned: 79.1
* Routed (ours), 2 experts: 83.6
* Routed (ours), 4 experts: 84.1

We measured mean latency per token (milliseconds):

* Dense backbone: 12.4
* Magnitude-pruned: 8.9
* Routed (ours), 2 experts: 6.8
* Routed (ours), 4 experts: 7.3

Expert utilization entropy (bits, max 2.0): 1.93 with the penalty, 0.41
without it. Router overhead was 3.2 percent of total FLOPs. Distillation
improved early-phase accuracy from 71.8 to 77.5 at step 10000. The annealing
schedule reached zero at step 60000. Final accuracy without distillation was
82.9. The 4-expert model kept 97.01 percent of dense quality at 58.9 percent
of dense latency.

## 3. Observations

* Observation: utilization entropy stays above 1.9 bits for the full run with
  the penalty enabled.
* Observation: removing the penalty collapses routing onto one expert within
  4000 steps.
* Observation: the latency advantage grows with sequence length.
"""

TEMPLATE_TEX = """\\documentclass{article}
\\usepackage{graphicx}
\\usepackage{booktabs}
\\title{}
\\begin{document}
\\maketitle

\\section{Introduction}

\\section{Related Work}

\\section{Method}

\\section{Experiments}

\\section{Conclusion}

\\bibliographystyle{plain}
\\bibliography{references}

\\end{document}
"""

GUIDELINES_MD = """Formatting requirements: eight pages maximum for the main
paper, double column, references excluded from the limit. Submissions must be
anonymized. Figures must be legible at print scale. An appendix may follow the
references on a fresh page.
"""


def write_bundle_dir(root: Path) -> Path:
    root.mkdir(parents=True, exist_ok=True)
    (root / "idea.md").write_text(IDEA_MD, encoding="utf-8")
    (root / "experimental_log.md").write_text(LOG_MD, encoding="utf-8")
    (root / "template.tex").write_text(TEMPLATE_TEX, encoding="utf-8")
    (root / "conference_guidelines.md").write_text(GUIDELINES_MD, encoding="utf-8")
    return root


@pytest.fixture
def bundle_dir(tmp_path: Path) -> Path:
    return write_bundle_dir(tmp_path / "bundle")


# ---------------------------------------------------------------------------
# scripted literature universe
# ---------------------------------------------------------------------------

FAMILIES = [
    "Ainsworth", "Bellini", "Cardoso", "Dvorak", "Eriksen", "Farrow",
    "Giordano", "Halvorsen", "Ibarra", "Jankovic", "Kowalski", "Lindqvist",
    "Moreau", "Novak", "Okafor", "Petrova", "Quintero", "Rasmussen",
    "Sorensen", "Takeda", "Ulrich", "Vasquez", "Winther", "Xanthos",
    "Yamada", "Zielinski", "Abate", "Brandt", "Castellano", "Duran",
    "Engel", "Fontaine", "Grieco", "Hoffmann", "Iversen", "Joubert",
]

TOPICS = [
    "Conditional Computation in Deep Networks",
    "Sparse Expert Layers at Scale",
    "Token-Level Routing for Transformers",
    "Load Balancing Objectives for Gated Models",
    "Distillation of Wide Language Models",
    "Latency-Aware Inference Scheduling",
    "Adaptive Depth Networks for Text",
    "Entropy Regularization for Router Stability",
    "Pruning versus Routing Tradeoffs",
    "Expert Collapse and Its Remedies",
    "Efficient Serving of Mixture Models",
    "Gating Functions under Distribution Shift",
]

N_TITLES = 36
GOOD_TITLES = 32  # indexes 0..31 verify cleanly
IDX_NO_ABSTRACT = 32
IDX_PAST_CUTOFF = (33, 34)
IDX_NO_MATCH = 35


def paper_title(i: int) -> str:
    return f"{TOPICS[i % len(TOPICS)]}: Study {i + 1:02d}"


def index_record(i: int) -> IndexRecord:
    year = 2019 + (i % 5)
    if i in IDX_PAST_CUTOFF:
        year, pub = 2024, date(2024, 11, 15)
    else:
        pub = date(year, 3, 5)
    return IndexRecord(
        entity_id=f"SS{i + 1:04d}",
        title=paper_title(i),
        authors=(f"{FAMILIES[i]}, Riley", f"{FAMILIES[(i + 7) % len(FAMILIES)]}, Sam"),
        year=year,
        venue="Conference on Learning Systems" if i % 2 else "Journal of Efficient Computation",
        abstract=None if i == IDX_NO_ABSTRACT else (
            f"We analyze {TOPICS[i % len(TOPICS)].lower()} and report practical findings "
            f"for large-scale training and inference, study {i + 1:02d}."
        ),
        citation_count=40 + 3 * i,
        publication_date=pub,
    )


SEARCH_DIRECTIONS = [
    "surveys of conditional computation for neural networks",
    "foundational papers on gated expert layers",
    "evidence that inference cost limits deployment of large models",
    "analyses of routing collapse in sparse expert training",
]

CLUSTERS = [
    {
        "subsection_title": "2.1 Sparse Expert Architectures",
        "methodology_cluster": "Gated expert layers",
        "sota_investigation_mission": "Identify widely used sparse expert architectures and their serving costs.",
        "limitation_hypothesis": "Static gating underuses capacity on easy tokens.",
        "limitation_search_queries": [
            "expert underutilization static gating evidence",
            "uniform routing capacity waste measurements",
            "sparse expert serving cost breakdown",
        ],
        "bridge_to_our_method": "Our learned router adapts compute per token.",
    },
    {
        "subsection_title": "2.2 Model Compression",
        "methodology_cluster": "Pruning and distillation",
        "sota_investigation_mission": "Collect pruning and distillation baselines with accuracy-latency tradeoffs.",
        "limitation_hypothesis": "Pruning permanently removes capacity needed for hard tokens.",
        "limitation_search_queries": [
            "magnitude pruning accuracy collapse hard examples",
            "distillation quality gap small students",
            "structured pruning latency benchmarks",
        ],
        "bridge_to_our_method": "Routing keeps capacity available and selects it per token.",
    },
    {
        "subsection_title": "2.3 Adaptive Inference",
        "methodology_cluster": "Early exit and adaptive depth",
        "sota_investigation_mission": "Find adaptive-depth and early-exit baselines for text models.",
        "limitation_hypothesis": "Exit classifiers destabilize training of deep stacks.",
        "limitation_search_queries": [
            "early exit training instability transformers",
            "adaptive depth gradient interference",
            "confidence thresholds miscalibration inference",
        ],
        "bridge_to_our_method": "Block-level routing avoids per-layer exit classifiers.",
    },
]

OUTLINE_JSON = {
    "plotting_plan": [
        {
            "figure_id": "fig_framework_overview",
            "title": "Routing Framework Overview",
            "plot_type": "diagram",
            "data_source": "idea.md",
            "objective": "Block diagram of the gating module wrapping each expert block.",
            "aspect_ratio": "16:9",
        },
        {
            "figure_id": "fig_accuracy_latency_tradeoff",
            "title": "Accuracy versus Latency",
            "plot_type": "plot",
            "data_source": "experimental_log.md",
            "objective": "Scatter plot of accuracy against latency for all systems.",
            "aspect_ratio": "4:3",
        },
        {
            "figure_id": "fig_utilization_entropy",
            "title": "Expert Utilization Entropy",
            "plot_type": "plot",
            "data_source": "both",
            "objective": "Line plot of utilization entropy with and without the penalty.",
            "aspect_ratio": "1:1",
        },
    ],
    "intro_related_work_plan": {
        "introduction_strategy": {
            "hook_hypothesis": "Inference cost now dominates the lifetime cost of deployed language models.",
            "problem_gap_hypothesis": "Dense stacks cannot adapt compute to token difficulty.",
            "search_directions": SEARCH_DIRECTIONS,
        },
        "related_work_strategy": {
            "overview": "Three clusters: sparse experts, compression, adaptive inference.",
            "subsections": CLUSTERS,
        },
    },
    "section_plan": [
        {
            "section_title": "Abstract",
            "subsections": [
                {
                    "subsection_title": "Abstract Content",
                    "content_bullets": ["State the problem, the router, and the headline numbers."],
                    "citation_hints": [],
                }
            ],
        },
        {
            "section_title": "3. Method",
            "subsections": [
                {
                    "subsection_title": "3.1 Gated Expert Blocks",
                    "content_bullets": ["Define the router scoring and top-1 selection."],
                    "citation_hints": ["research paper or technical report introducing 'gated expert layers'"],
                },
                {
                    "subsection_title": "3.2 Training Objective",
                    "content_bullets": ["Utilization penalty and distillation annealing."],
                    "citation_hints": [],
                },
            ],
        },
        {
            "section_title": "4. Experiments",
            "subsections": [
                {
                    "subsection_title": "4.1 Setup",
                    "content_bullets": ["Datasets, metrics, baselines from the log."],
                    "citation_hints": [],
                },
                {
                    "subsection_title": "4.2 Main Results",
                    "content_bullets": ["Accuracy and latency tables; utilization analysis."],
                    "citation_hints": [],
                },
            ],
        },
        {
            "section_title": "5. Conclusion",
            "subsections": [
                {
                    "subsection_title": "Summary",
                    "content_bullets": ["Recap findings and limitations."],
                    "citation_hints": [],
                }
            ],
        },
    ],
}


def build_query_table() -> dict[str, list[int]]:
    """query -> candidate title indexes (3 per query, 39 slots, 36 distinct)."""
    queries: list[str] = list(SEARCH_DIRECTIONS)
    for cluster in CLUSTERS:
        queries.extend(cluster["limitation_search_queries"])
    assert len(queries) == 13
    table: dict[str, list[int]] = {}
    next_title = 0
    for qi, query in enumerate(queries):
        picks = []
        for slot in range(3):
            if next_title < N_TITLES:
                picks.append(next_title)
                next_title += 1
            else:
                picks.append((qi * 5 + slot) % GOOD_TITLES)  # planted repeat
        table[query] = picks
    assert next_title == N_TITLES
    return table


QUERY_TABLE = build_query_table()

# prose blocks reused by the scripted writer (deterministic filler)
_METHOD_SENTENCES = [
    "The router consumes the token representation and emits a score per expert block.",
    "Only the top-scoring expert executes, so the marginal cost of an idle expert is zero.",
    "A utilization penalty pushes the marginal routing distribution toward uniform.",
    "We initialize every expert from the dense checkpoint to preserve the original function.",
    "Distillation against the dense teacher stabilizes the first training phase.",
    "The distillation weight anneals linearly to zero so the routed model can specialize.",
    "Scores pass through a temperature-controlled softmax before selection.",
    "Gradient flow to unselected experts happens only through the router scores.",
    "We cap router capacity per batch to bound worst-case latency.",
    "The design keeps the attention stack untouched, which simplifies deployment.",
]

_EXPERIMENT_SENTENCES = [
    "We evaluate on a held-out web-text corpus and three reasoning suites.",
    "All systems share the tokenizer, context length, and evaluation harness.",
    "Latency is measured per token at batch size one on a single accelerator.",
    "The routed model with four experts retains nearly all of the dense quality.",
    "The two-expert variant trades a small accuracy drop for the lowest latency.",
    "Utilization entropy confirms that the penalty keeps all experts active.",
    "Removing the penalty collapses routing onto a single expert early in training.",
    "Router overhead stays small relative to the savings from idle experts.",
    "Distillation closes most of the early-phase quality gap.",
    "The latency advantage grows with sequence length in our profiling runs.",
]


class ScriptedTransports:
    """Deterministic stand-ins for the live LLM, grounded LLM, and index."""

    def __init__(self):
        self.llm_calls = 0
        self.grounded_calls = 0
        self.index_calls = 0

    # -- plain completion ---------------------------------------------------

    def llm(self, req: CompletionRequest) -> str:
        self.llm_calls += 1
        prompt = req.prompt
        if "venue-compliant paper outline" in prompt:
            return "Here is the outline.\n```json\n" + json.dumps(OUTLINE_JSON, indent=2) + "\n```\n"
        if "fill in two sections: Introduction and Related Work" in prompt:
            return self._lit_reply(prompt)
        if "Complete a research paper by writing the missing sections" in prompt:
            return self._writer_reply(prompt)
        if "Please provide the final caption" in prompt:
            return self._caption_reply(prompt)
        if "rigorous peer reviewer" in prompt:
            return self._review_reply(prompt)
        if "Rebuttal via Revision" in prompt:
            return self._revise_reply(prompt)
        if "LaTeX build engineer" in prompt:
            return self._repair_reply(prompt)
        if "Senior AI Researcher and Academic Writer" in prompt:
            return self._single_agent_reply(prompt)
        if "categorize the provided references" in prompt:
            return self._partition_reply(prompt)
        if "skeptical academic reviewer agent" in prompt:
            return self._rubric_reply(prompt)
        if "Side-by-Side (SxS)" in prompt:
            return self._sxs_reply(prompt)
        if 'high-level "Concept Note"' in prompt:
            return self._sparse_idea_reply(prompt)
        if 'detailed "Technical Proposal"' in prompt:
            return self._dense_idea_reply(prompt)
        if 'comprehensive "experimental log"' in prompt:
            return self._bench_log_reply(prompt)
        raise AssertionError("scripted llm got an unrecognized prompt:\n" + prompt[:400])

    def grounded(self, req: CompletionRequest) -> str:
        self.grounded_calls += 1
        m = re.search(r"\*\*Search mission\*\*\n\n(.*?)\n\n\*\*Context", req.prompt, re.DOTALL)
        assert m, "grounded prompt missing the search mission block"
        query = m.group(1).strip()
        picks = QUERY_TABLE[query]
        items = [
            {"title": paper_title(i), "year": index_record(i).year, "venue": index_record(i).venue}
            for i in picks
        ]
        return "```json\n" + json.dumps(items, indent=2) + "\n```\n"

    def index(self, title: str) -> list[IndexRecord]:
        self.index_calls += 1
        for i in range(N_TITLES):
            if paper_title(i) == title:
                if i == IDX_NO_MATCH:
                    return [
                        IndexRecord(
                            entity_id="SSJUNK",
                            title="Entirely Unrelated Agricultural Yield Forecasting",
                            authors=("Nobody, Alex",),
                            year=2015,
                            abstract="Crop yields.",
                            citation_count=3,
                            publication_date=date(2015, 6, 1),
                        )
                    ]
                return [index_record(i)]
        return []

    # -- scripted agent replies ----------------------------------------------

    @staticmethod
    def _materials_block(prompt: str, name: str, stop: str) -> str:
        start = prompt.index(f"[{name}]\n") + len(name) + 3
        end = prompt.index(stop, start)
        return prompt[start:end]

    def _lit_reply(self, prompt: str) -> str:
        checklist_raw = self._materials_block(prompt, "citation_checklist", "\n\n[collected_papers]")
        keys = [k.strip() for k in checklist_raw.split(",") if k.strip()]
        template = self._materials_block(prompt, "template.tex", "\n\n**Output Format:**")
        cite_keys = sorted(keys)[: max(1, round(len(keys) * 0.94))]
        intro_cites = cite_keys[:8]
        rw_cites = cite_keys[8:]
        intro = (
            "Inference cost now dominates the lifetime cost of deployed language models "
            + "".join(f"\\cite{{{k}}} " for k in intro_cites[:4])
            + "and dense stacks cannot adapt compute to token difficulty "
            + "".join(f"\\cite{{{k}}} " for k in intro_cites[4:])
            + ". We propose a learned router that activates one expert block per token, "
            "trained with a utilization penalty and a distillation warmup. Our study "
            "quantifies the accuracy-latency tradeoff of conditional routing against "
            "dense and pruned baselines and analyzes the collapse failure mode."
        )
        groups = [rw_cites[i::3] for i in range(3)]
        rw_parts = []
        headers = [
            "Sparse expert architectures route tokens through gated expert layers",
            "Compression methods prune or distill dense models",
            "Adaptive inference adjusts depth or exits early",
        ]
        for header, group in zip(headers, groups):
            cites = "".join(f"\\cite{{{k}}} " for k in group)
            rw_parts.append(
                f"{header} {cites}. These lines of work motivate per-token routing, "
                "but none adapts block-level capacity with a stability penalty."
            )
        filled = oracles.splice_template_sections(
            template, {"Introduction": intro, "Related Work": "\n\n".join(rw_parts)}
        )
        return "The updated template follows.\n```latex\n" + filled + "\n```\n"

    def _writer_reply(self, prompt: str) -> str:
        template = self._materials_block(prompt, "template.tex", "\n\n**Output Format**")
        figures_block = self._materials_block(prompt, "figures_list", "\n\n[template.tex]")
        cmap_raw = self._materials_block(prompt, "citation_map.json", "\n\n[conference_guidelines.md]")
        cmap = json.loads(cmap_raw)
        fig_entries = re.findall(r"- figures/(\S+) \(([^)]*)\): (.*)", figures_block)
        cited = set(re.findall(r"\\cite\{([^}]*)\}", template))
        uncited = [k for k in sorted(cmap) if k not in cited]
        method = (
            " ".join(_METHOD_SENTENCES * 6)
            + " Prior gated designs "
            + "".join(f"\\cite{{{k}}} " for k in uncited)
            + "informed the scoring function."
        )
        figure_envs = []
        for name, _ratio, caption in fig_entries:
            figure_envs.append(
                "\\begin{figure}\n\\centering\n"
                f"\\includegraphics[width=0.9\\linewidth]{{figures/{name}}}\n"
                f"\\caption{{{caption}}}\n\\end{{figure}}"
            )
        table = (
            "\\begin{table}\n\\centering\n\\begin{tabular}{lcc}\n\\toprule\n"
            "System & Accuracy & Latency (ms) \\\\\n\\midrule\n"
            "Dense backbone & 84.3 & 12.4 \\\\\n"
            "Magnitude-pruned & 79.1 & 8.9 \\\\\n"
            "Routed, 2 experts & 83.6 & 6.8 \\\\\n"
            "Routed, 4 experts & 84.1 & 7.3 \\\\\n"
            "\\bottomrule\n\\end{tabular}\n\\caption{Accuracy and latency.}\n\\end{table}"
        )
        experiments = (
            " ".join(_EXPERIMENT_SENTENCES * 8)
            + "\n\n" + table + "\n\n" + "\n\n".join(figure_envs)
            + "\n\nUtilization entropy reached 1.93 bits with the penalty and 0.41 without it. "
            "Router overhead was 3.2 percent of total FLOPs. Distillation improved early accuracy "
            "from 71.8 to 77.5 at step 10000, and the 4-expert model kept 97.01 percent of dense "
            "quality at 58.9 percent of dense latency."
        )
        conclusion = (
            "Conditional routing converts dense checkpoints into adaptive models with "
            "near-dense quality at reduced latency. " + " ".join(_EXPERIMENT_SENTENCES[:4])
        )
        abstract = (
            "\\begin{abstract}\nWe present a learned token router that activates one expert "
            "block per token, keeping 97.01 percent of dense quality at 58.9 percent of dense "
            "latency. A utilization penalty prevents routing collapse.\n\\end{abstract}\n"
        )
        filled = oracles.splice_template_sections(
            template, {"Method": method, "Experiments": experiments, "Conclusion": conclusion}
        )
        filled = filled.replace("\\maketitle\n", "\\maketitle\n" + abstract, 1)
        filled = filled.replace("\\title{}", "\\title{Token-Level Conditional Routing}", 1)
        return "```latex\n" + filled + "\n```\n"

    def _caption_reply(self, prompt: str) -> str:
        m = re.search(r"Detailed Figure Description: (.*)", prompt)
        detail = m.group(1).strip() if m else "the figure"
        return f"Placeholder visualization for {detail}, rendered from the run artifacts."

    def _review_reply(self, prompt: str) -> str:
        m = re.search(r"\*\*Manuscript \(LaTeX source\)\*\*\n\n(.*?)\n\n\*\*Output Format", prompt, re.DOTALL)
        tex = m.group(1) if m else ""
        passes = tex.count("% refinement-pass")
        overall = 4 + passes
        axis = min(4, 2 + passes)
        payload = {
            "sub_axes": {
                "originality": 3, "quality": axis, "clarity": axis, "significance": 3,
                "soundness": axis, "presentation": axis, "contribution": 3,
            },
            "overall": overall,
            "decision": "accept" if overall >= 6 else "reject",
            "feedback": {
                "strengths": ["Clear problem framing."],
                "weaknesses": [f"Pass {passes}: the training protocol needs more detail."],
                "questions": ["What is the router overhead at long context lengths?"],
            },
        }
        return "```json\n" + json.dumps(payload, indent=2) + "\n```\n"

    def _revise_reply(self, prompt: str) -> str:
        tex = self._materials_block(prompt, "paper.tex", "\n\n[conference_guidelines.md]")
        addition = (
            "\n% refinement-pass\nIn response to review feedback we clarify that the router "
            "overhead of 3.2 percent was measured end to end, and that the annealing schedule "
            "reached zero at step 60000.\n\n"
        )
        revised = tex.replace("\\bibliographystyle", addition + "\\bibliographystyle", 1)
        worklog = {
            "addressed_weaknesses": ["Expanded the training protocol details."],
            "integrated_answers": ["Added router overhead measurement context."],
            "actions_taken": ["Appended clarification before the bibliography."],
        }
        return (
            "```json\n" + json.dumps(worklog, indent=2) + "\n```\n\n"
            "```latex\n" + revised + "\n```\n"
        )

    def _repair_reply(self, prompt: str) -> str:
        m = re.search(r"```latex\n(.*?)\n```", prompt, re.DOTALL)
        tex = m.group(1) if m else ""
        repaired = tex.replace("\\end{figure*}", "\\end{figure}")
        return "```latex\n" + repaired + "\n```\n"

    def _single_agent_reply(self, prompt: str) -> str:
        bib = "\n\n".join(
            "@inproceedings{%s,\n  title = {%s},\n  author = {%s},\n  year = {%d}\n}"
            % (
                f"{FAMILIES[i].lower()}{2018 + i}{TOPICS[i % len(TOPICS)].split()[0].lower()}",
                paper_title(i),
                f"{FAMILIES[i]}, Riley",
                2018 + i,
            )
            for i in range(10)
        )
        keys = [
            f"{FAMILIES[i].lower()}{2018 + i}{TOPICS[i % len(TOPICS)].split()[0].lower()}"
            for i in range(10)
        ]
        cites = " ".join(f"\\cite{{{k}}}" for k in keys)
        tex = (
            "\\documentclass{article}\n\\title{Single Pass Draft}\n\\begin{document}\n\\maketitle\n"
            "\\section{Introduction}\nRouting matters " + cites + ".\n\n"
            "\\section{Method}\n" + " ".join(_METHOD_SENTENCES * 3) + "\n\n"
            "\\section{Experiments}\nAccuracy was 84.3 at 12.4 ms.\n"
            + " ".join(_EXPERIMENT_SENTENCES * 3) + "\n\n"
            "\\section{Conclusion}\nA single call wrote this draft.\n"
            "\\end{document}\n"
        )
        return "```bibtex\n" + bib + "\n```\n\n```latex\n" + tex + "\n```\n"

    def _partition_reply(self, prompt: str) -> str:
        ordinals = re.findall(r"^(\d+)\. ", prompt, re.MULTILINE)
        assignments = {o: ("P0" if int(o) % 2 == 1 else "P1") for o in ordinals}
        return "```json\n" + json.dumps(assignments) + "\n```\n"

    def _rubric_reply(self, prompt: str) -> str:
        payload = {
            "paper_title": "Token-Level Conditional Routing",
            "citation_statistics": {
                "estimated_unique_citations": 30,
                "citation_density_assessment": "appropriate",
                "breadth_across_subareas": "moderate",
                "comparison_to_baseline": "about half of the venue average",
                "notes": "",
            },
            "axis_scores": {
                "coverage_and_completeness": {"score": 55, "justification": "Moderate breadth."},
                "relevance_and_focus": {"score": 70, "justification": "Focused."},
                "critical_analysis_and_synthesis": {"score": 58, "justification": "Some synthesis."},
                "positioning_and_novelty": {"score": 60, "justification": "Gap stated."},
                "organization_and_writing": {"score": 72, "justification": "Clear."},
                "citation_practices_and_rigor": {"score": 55, "justification": "Sparse volume."},
            },
            "penalties": [{"reason": "Below-average citation volume", "points_deducted": 5}],
            "summary": {"strengths": ["clear"], "weaknesses": ["volume"], "top_improvements": ["add"]},
            "overall_score": 57.0,
        }
        return "```json\n" + json.dumps(payload) + "\n```\n"

    def _sxs_reply(self, prompt: str) -> str:
        m1 = re.search(r"\*\*Paper 1[^\n]*\*\*\n\n(.*?)\n\n\*\*Paper 2", prompt, re.DOTALL)
        first = m1.group(1) if m1 else ""
        winner = "paper_1" if len(first) % 2 == 0 else "paper_2"
        payload = {
            "paper_1_analysis": "Analysis of the first manuscript.",
            "paper_2_analysis": "Analysis of the second manuscript.",
            "comparison_justification": "Deterministic scripted comparison.",
            "winner": winner,
        }
        return "```json\n" + json.dumps(payload) + "\n```\n"

    def _sparse_idea_reply(self, prompt: str) -> str:
        return (
            "## Problem Statement\nWe will study conditional routing at a whiteboard level.\n\n"
            "## Core Hypothesis\nA learned router can keep quality while cutting cost.\n\n"
            "## Proposed Methodology (High-Level Technical Approach)\nDescribe modules by function.\n\n"
            "## Expected Contribution\nA practical recipe for routed models.\n"
        )

    def _dense_idea_reply(self, prompt: str) -> str:
        return (
            "## Problem Statement\nWe will formalize routing.\n\n"
            "## Core Hypothesis\nWe define the gate $g(x) = \\mathrm{softmax}(W x)$ where "
            "$W$ is the router weight and $x$ the token state.\n\n"
            "## Proposed Methodology (Detailed Technical Approach)\nThe loss is "
            "$L = L_{task} + \\lambda L_{util}$ with $\\lambda$ the penalty weight.\n\n"
            "## Expected Contribution\nA formal account of routed training.\n"
        )

    def _bench_log_reply(self, prompt: str) -> str:
        return (
            "# Experimental Log\n\n## 1. Experimental Setup\nWe ran the routed model on "
            "three suites with the decoupled optimizer.\n\n"
            "## 2. Raw Numeric Data (from Tables)\nAccuracy: dense 84.3, routed 84.1. "
            "Latency: dense 12.4 ms, routed 7.3 ms.\n\n"
            "## 3. Observations\nObservation: utilization entropy stayed above 1.9 bits.\n"
        )


@pytest.fixture
def scripted() -> ScriptedTransports:
    return ScriptedTransports()
