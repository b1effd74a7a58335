"""Straight-line scalar reimplementation of the bi-level attention encoder.

Plain Python loops over floats and lists, written from the layer equations
without reusing any package code.  Parameters are read as raw numpy arrays
and immediately converted to nested lists.
"""

import math


def _mv(M, x):
    return [sum(M[i][j] * x[j] for j in range(len(x))) for i in range(len(M))]


def _dot(a, b):
    return sum(x * y for x, y in zip(a, b))


def _vadd(a, b):
    return [x + y for x, y in zip(a, b)]


def _relu(x):
    return [v if v > 0 else 0.0 for v in x]


def _lrelu(x, slope):
    return x if x >= 0 else slope * x


def _softmax(xs):
    m = max(xs)
    e = [math.exp(x - m) for x in xs]
    s = sum(e)
    return [v / s for v in e]


def neighbor_lists(edges):
    """``{(v, r): sorted unique neighbors}`` from (head, rel, tail) rows."""
    out = {}
    for h, r, t in edges:
        out.setdefault((int(h), int(r)), set()).add(int(t))
    return {k: sorted(v) for k, v in out.items()}


def layer(edges, num_nodes, h, p, cfg, prev_z=None):
    """One layer.  ``p`` maps names to numpy arrays, ``cfg`` is a dict.

    Returns ``(h_out, gamma, psi, z)``; ``gamma[k][(v, r)]`` is a list over
    neighbors, ``psi[k][v]`` a list of rows over the node's sorted relations,
    ``z[k][(v, r)]`` the relation summary.
    """
    nb = neighbor_lists(edges)
    K, d_in, d_out = cfg["heads"], cfg["d_in"], cfg["d_out"]
    slope = cfg["slope"]
    node_mode, rel_mode = cfg["node_mode"], cfg["rel_mode"]
    h = [list(map(float, row)) for row in h]
    W_self = p["W_self"].tolist()
    head_outs, gammas, psis, zs = [], [], [], []
    for k in range(K):
        out = [[0.0] * d_out for _ in range(num_nodes)]
        gk, pk, zk = {}, {}, {}
        for v in range(num_nodes):
            rels = sorted(r for (u, r) in nb if u == v)
            own = _mv(W_self, h[v])
            if not rels:
                out[v] = _relu(own)
                continue
            z = {}
            for r in rels:
                js = nb[(v, r)]
                if node_mode == "additive":
                    a = p[f"a.h{k}"][r].tolist()
                    logits = [_lrelu(_dot(a[:d_in], h[v]) + _dot(a[d_in:], h[j]), slope) for j in js]
                elif node_mode == "multiplicative":
                    q = _mv(p[f"U1.h{k}"][r].tolist(), h[v])
                    logits = [_dot(q, _mv(p[f"U2.h{k}"][r].tolist(), h[j])) for j in js]
                else:
                    logits = [0.0] * len(js)
                g = _softmax(logits)
                gk[(v, r)] = g
                zr = [sum(g[n] * h[j][c] for n, j in enumerate(js)) for c in range(d_in)]
                if cfg["skip"] and prev_z is not None:
                    pz = prev_z[k][(v, r)]
                    if "skip_low" in p:
                        pz = _mv(p["skip_low"].tolist(), pz)
                    zr = _vadd(zr, pz)
                z[r] = zr
            zk.update({(v, r): z[r] for r in rels})
            if rel_mode == "none":
                for r in rels:
                    out[v] = _vadd(out[v], _relu(_vadd(z[r], own)))
                continue
            q = {r: _mv(p[f"W1.h{k}"][r].tolist(), z[r]) for r in rels}
            kk = {r: _mv(p[f"W2.h{k}"][r].tolist(), z[r]) for r in rels}
            val = {r: _mv(p[f"W3.h{k}"][r].tolist(), z[r]) for r in rels}
            rows = []
            for r in rels:
                if rel_mode == "multiplicative":
                    logits = [_dot(q[r], kk[r2]) for r2 in rels]
                else:
                    a = p[f"a_rel.h{k}"][r].tolist()
                    logits = [_lrelu(_dot(a[:d_out], q[r]) + _dot(a[d_out:], kk[r2]), slope) for r2 in rels]
                psi = _softmax(logits)
                rows.append(psi)
                mix = [sum(psi[n] * val[r2][c] for n, r2 in enumerate(rels)) for c in range(d_out)]
                out[v] = _vadd(out[v], _relu(_vadd(mix, own)))
            pk[v] = rows
        head_outs.append(out)
        gammas.append(gk)
        psis.append(pk)
        zs.append(zk)
    h_out = [[sum(head_outs[k][v][c] for k in range(K)) / K for c in range(d_out)] for v in range(num_nodes)]
    if cfg["skip"]:
        if "skip_high" in p:
            sh = p["skip_high"].tolist()
            h_out = [_vadd(h_out[v], _mv(sh, h[v])) for v in range(num_nodes)]
        else:
            h_out = [_vadd(h_out[v], h[v]) for v in range(num_nodes)]
    return h_out, gammas, psis, zs


def encoder(edges, num_nodes, types, embedding, type_proj, layers):
    """Input projection followed by the stacked layers.

    ``layers`` is a list of ``(param_dict, cfg_dict)``.  Returns the final
    embeddings and the per-layer ``(gamma, psi)``.
    """
    T = type_proj.tolist()
    h = [_mv(T[int(types[v])], embedding[v].tolist()) for v in range(num_nodes)]
    prev_z = None
    records = []
    for p, cfg in layers:
        h, g, s, prev_z = layer(edges, num_nodes, h, p, cfg, prev_z)
        records.append((g, s))
    return h, records


def unpack(layer_params):
    """Raw arrays of one package ``LayerParams`` under oracle names, plus its cfg."""
    c = layer_params.config
    p = {name: t.data for name, t in layer_params.named_tensors().items()}
    cfg = {
        "heads": c.heads,
        "d_in": c.d_in,
        "d_out": c.d_out,
        "slope": c.leaky_slope,
        "node_mode": c.node_att_mode,
        "rel_mode": c.rel_att_mode,
        "skip": c.use_skip,
    }
    return p, cfg
