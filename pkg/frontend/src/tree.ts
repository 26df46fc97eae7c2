// Search tree rendering: the exported node table becomes a nested list with
// visit counts and Q values, and every node on the exported best path gets
// the `best` class. The export already names the best path; the view only
// displays it, it never recomputes one.

import type { TreeExport, TreeNodeRow } from "./types.js";
import { escapeHtml } from "./render.js";

function childrenOf(tree: TreeExport): Map<number, TreeNodeRow[]> {
  const byParent = new Map<number, TreeNodeRow[]>();
  for (const node of tree.nodes) {
    if (node.parent === null) continue;
    const siblings = byParent.get(node.parent) ?? [];
    siblings.push(node);
    byParent.set(node.parent, siblings);
  }
  for (const siblings of byParent.values()) {
    siblings.sort((a, b) => a.id - b.id);
  }
  return byParent;
}

function nodeLabel(node: TreeNodeRow): string {
  const action = node.action === null ? "(root)" : node.action;
  const value = node.value === null ? "" : ` v=${node.value.toFixed(2)}`;
  const flags = `${node.invalid ? " invalid" : ""}${node.terminal ? " terminal" : ""}`;
  return (
    `${escapeHtml(action)} · N=${node.visits} Q=${node.q.toFixed(2)}${value}${flags}`
  );
}

export function renderTree(tree: TreeExport | null): string {
  if (tree === null || tree.nodes.length === 0) {
    return `<div class="search-tree empty">no search tree yet</div>`;
  }
  const byParent = childrenOf(tree);
  const best = new Set(tree.best_path);

  function renderNode(node: TreeNodeRow): string {
    const classes = ["node"];
    if (best.has(node.id)) classes.push("best");
    if (node.invalid) classes.push("invalid");
    const children = byParent.get(node.id) ?? [];
    const childList = children.length
      ? `<ul>${children.map(renderNode).join("")}</ul>`
      : "";
    return (
      `<li class="${classes.join(" ")}" data-node="${node.id}">` +
      `<span class="label">${nodeLabel(node)}</span>${childList}</li>`
    );
  }

  const root = tree.nodes.find((n) => n.id === tree.root);
  if (!root) {
    return `<div class="search-tree empty">malformed tree export</div>`;
  }
  return `<ul class="search-tree">${renderNode(root)}</ul>`;
}

// Action texts along the exported best path, in root-to-leaf order. Used to
// cross-check the highlight against the trajectory the service reported.
export function bestPathActions(tree: TreeExport): string[] {
  const byId = new Map(tree.nodes.map((n) => [n.id, n]));
  return tree.best_path.map((id) => byId.get(id)?.action ?? "");
}
