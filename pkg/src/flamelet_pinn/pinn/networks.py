"""Dense networks evaluated from a flat parameter vector.

Every network owns a contiguous slice of one shared parameter vector so that
the optimizer sees a single array.  The forward pass comes in two flavours:
a recording pass on a tape (inputs may be jets carrying input derivatives)
and a plain numpy pass for fast evaluation after training.
"""

import numpy as np

from .. import autodiff as ad


def _is_const_zero(x):
    return not isinstance(x, (ad.Node, ad.Dual)) and np.ndim(x) == 0 and x == 0.0


class MLP:
    """Fully connected network on ``params[offset : offset + n_params]``.

    ``sizes`` lists the layer widths input first.  Hidden layers use
    ``hidden``; the last layer uses ``out`` (pass ``None`` for a linear
    output).  Weights are stored row-major as (n_out, n_in) blocks, each
    followed by its bias.
    """

    def __init__(self, sizes, offset=0, hidden=ad.tanh, out=ad.exp):
        if len(sizes) < 2:
            raise ValueError("a network needs at least input and output sizes")
        self.sizes = [int(s) for s in sizes]
        self.offset = int(offset)
        self.hidden = hidden
        self.out = out
        self.layers = []
        pos = self.offset
        for n_in, n_out in zip(self.sizes[:-1], self.sizes[1:]):
            self.layers.append((n_in, n_out, pos, pos + n_in * n_out))
            pos += n_in * n_out + n_out
        self.n_params = pos - self.offset

    def init_params(self, rng):
        """Glorot-uniform weights, zero biases, drawn in layer order."""
        theta = np.empty(self.n_params)
        pos = 0
        for n_in, n_out, _, _ in self.layers:
            limit = np.sqrt(6.0 / (n_in + n_out))
            theta[pos:pos + n_in * n_out] = rng.uniform(-limit, limit,
                                                        size=n_in * n_out)
            pos += n_in * n_out
            theta[pos:pos + n_out] = 0.0
            pos += n_out
        return theta

    def _slices(self, theta, layer):
        n_in, n_out, w_off, b_off = layer
        W = theta[w_off:w_off + n_in * n_out].reshape(n_out, n_in)
        b = theta[b_off:b_off + n_out]
        return W, b

    def forward(self, tape, feats):
        """Recorded forward pass; ``tape.set_params`` must have been called.

        ``feats`` entries may be plain arrays, Nodes, or Duals (jets whose
        components are Nodes or arrays).  Returns one output per unit of the
        last layer, Duals when any input was a jet.
        """
        theta = tape.param_values
        cur = list(feats)
        last = len(self.layers) - 1
        for li, layer in enumerate(self.layers):
            n_in, n_out, w_off, b_off = layer
            if len(cur) != n_in:
                raise ad.AutodiffError(
                    f"layer expects {n_in} features, got {len(cur)}")
            W, b = self._slices(theta, layer)
            w_range = (w_off, w_off + n_in * n_out)
            b_range = (b_off, b_off + n_out)
            cur = _affine(tape, cur, W, b, w_range, b_range)
            act = self.out if li == last else self.hidden
            if act is not None:
                cur = [act(x) for x in cur]
        return cur

    def forward_plain(self, theta, X):
        """Plain numpy pass: X is (n_in, lanes); returns (n_out, lanes)."""
        A = np.asarray(X, dtype=float)
        if A.ndim == 1:
            A = A[None, :]
        last = len(self.layers) - 1
        for li, layer in enumerate(self.layers):
            W, b = self._slices(theta, layer)
            A = W @ A + b[:, None]
            if li == last:
                if self.out is ad.exp:
                    A = np.exp(A)
                elif self.out is ad.tanh:
                    A = np.tanh(A)
                elif self.out is not None:
                    raise ad.AutodiffError("unsupported plain output activation")
            else:
                A = np.tanh(A)
        return A


def _affine(tape, feats, W, b, w_range, b_range):
    """One affine layer over mixed plain/Node/Dual features."""
    has_dual = any(isinstance(f, ad.Dual) for f in feats)
    if not has_dual:
        return tape.affine_group(feats, W, b, w_range, b_range)
    prim, tang, tng2 = [], [], []
    order2 = False
    for f in feats:
        if isinstance(f, ad.Dual):
            prim.append(f.primal)
            tang.append(f.tangent)
            if f.tangent2 is not None:
                order2 = True
            tng2.append(0.0 if f.tangent2 is None else f.tangent2)
        else:
            prim.append(f)
            tang.append(0.0)
            tng2.append(0.0)
    p_out = tape.affine_group(prim, W, b, w_range, b_range)
    if all(_is_const_zero(x) for x in tang):
        t_out = [0.0] * len(p_out)
    else:
        t_out = tape.affine_group(tang, W, None, w_range, None)
    if not order2:
        return [ad.Dual(p, t) for p, t in zip(p_out, t_out)]
    if all(_is_const_zero(x) for x in tng2):
        t2_out = [0.0] * len(p_out)
    else:
        t2_out = tape.affine_group(tng2, W, None, w_range, None)
    return [ad.Dual(p, t, t2) for p, t, t2 in zip(p_out, t_out, t2_out)]


class BranchedNet:
    """Two encoders feeding a shared decoder.

    Coordinate inputs and the parameter input are embedded separately; the
    concatenated embeddings pass through the decoder.  All three blocks live
    in one contiguous parameter slice starting at ``offset``.
    """

    def __init__(self, n_coord, n_param, n_out, width=50, enc_depth=2,
                 dec_depth=2, offset=0):
        enc_sizes = [n_coord] + [width] * enc_depth
        self.coord_enc = MLP(enc_sizes, offset=offset, out=ad.tanh)
        pos = offset + self.coord_enc.n_params
        self.param_enc = MLP([n_param] + [width] * enc_depth, offset=pos,
                             out=ad.tanh)
        pos += self.param_enc.n_params
        self.decoder = MLP([2 * width] + [width] * dec_depth + [n_out],
                           offset=pos, out=ad.exp)
        self.offset = offset
        self.n_params = (self.coord_enc.n_params + self.param_enc.n_params
                         + self.decoder.n_params)

    def init_params(self, rng):
        return np.concatenate([self.coord_enc.init_params(rng),
                               self.param_enc.init_params(rng),
                               self.decoder.init_params(rng)])

    def forward(self, tape, coord_feats, param_feats):
        c = self.coord_enc.forward(tape, coord_feats)
        p = self.param_enc.forward(tape, param_feats)
        return self.decoder.forward(tape, c + p)

    def forward_plain(self, theta, X_coord, X_param):
        c = self.coord_enc.forward_plain(theta, X_coord)
        p = self.param_enc.forward_plain(theta, X_param)
        if p.shape[1] == 1 and c.shape[1] > 1:
            p = np.broadcast_to(p, (p.shape[0], c.shape[1]))
        return self.decoder.forward_plain(theta, np.vstack([c, p]))
