"""Draft formulas, directed draft graphs, and materialization.

A draft formula {(i, j)} names ranked candidates, not tokens: "take the
i-th most confident masked position and its j-th most likely token".
Formulas only turn into concrete blocks once a distribution is in hand,
which is what lets one fixed graph serve every decoding step.  Nodes
with multiple parents are the point: the six-node graph below gives its
deepest draft three distinct acceptance routes.

Run: python3 demos/02_draft_graphs.py
"""

from blockspec import synthetic
from blockspec.core import SequenceState
from blockspec.drafting import (
    DraftFormula,
    build_graph,
    export_dot,
    format_graph,
    rank,
    spawn_drafts,
)
from blockspec.model import forward, train_from_corpus


def main() -> None:
    # The six-formula graph from the worked examples: two level-1 roots,
    # three level-2 combinations, one level-3 node with three parents.
    formulas = [
        DraftFormula.of([(1, 1)]),
        DraftFormula.of([(2, 1)]),
        DraftFormula.of([(1, 1), (2, 1)]),
        DraftFormula.of([(1, 1), (3, 1)]),
        DraftFormula.of([(2, 1), (3, 1)]),
        DraftFormula.of([(1, 1), (2, 1), (3, 1)]),
    ]
    graph = build_graph(formulas, tokens_per_level=1, budget=10)
    print("graph: %d nodes, depth %d" % (graph.num_nodes, graph.depth))
    for idx, node in enumerate(graph.nodes):
        parents = graph.parents[idx]
        names = ", ".join(graph.nodes[p].format() for p in parents) or "root"
        print("  level %d  %-14s <- %s" % (graph.level_of(idx), node.format(), names))
    deepest = graph.num_nodes - 1
    print("the level-3 node has %d parents: accept any level-2 draft and it stays alive."
          % len(graph.parents[deepest]))

    # Materialize the whole graph against a live model distribution.
    corpus = synthetic.make_corpus(synthetic.DEFAULT_SEED)
    model = train_from_corpus(corpus, max(t for s in corpus for t in s))
    state = SequenceState.initial((2, 2), num_blocks=1, block_length=4)
    marginals = forward(model, state)
    view = rank(marginals, state.active_block, top_k=3)
    print("\nranking for prompt '2 2', four masked positions:")
    print("  position order:", view.ordered_positions)
    drafts = spawn_drafts(graph, view, state.active_block)
    print("spawned %d drafts (level order):" % len(drafts))
    for d in drafts:
        print("  level %d  %-14s -> %s" % (d.level, d.formula.format(), d.block.tokens))

    # With fewer masked positions, formulas that need rank 3 skip.
    shrunken = state.active_block.with_token(0, 2).with_token(3, 2)
    view2 = rank(marginals, shrunken, top_k=3)
    survivors = spawn_drafts(graph, view2, shrunken)
    print("\nwith only 2 masked positions, %d of 6 formulas survive:" % len(survivors))
    for d in survivors:
        print("  %-14s -> %s" % (d.formula.format(), d.block.tokens))

    # Graphs are plain text on disk and graphviz for the eyes.
    print("\ngraph file format:")
    print(format_graph(graph))
    dot = export_dot(graph)
    print("DOT export (feed to `dot -Tpng`): %d lines, in-degree of n%d is %d"
          % (len(dot.splitlines()), deepest, dot.count("-> n%d;" % deepest)))


if __name__ == "__main__":
    main()
