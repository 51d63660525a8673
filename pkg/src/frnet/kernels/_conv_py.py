"""Pure numpy grouped 2-D cross-correlation kernels.

Fallback used when the compiled ``_conv_c`` extension is unavailable. Dense
convolutions (``groups == 1``) go through im2col and one BLAS matmul; grouped
and depthwise ones loop over kernel taps with whole-array arithmetic.

Every function takes an input that is already zero-padded; cropping the
padding back off the input gradient is the caller's job.

Shapes:
    xp   (B, Cin, Hp, Wp)
    w    (Cout, Cin // groups, kh, kw)
    out  (B, Cout, OH, OW) with OH = (Hp - kh) // sh + 1
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _out_extent(hp, wp, kh, kw, sh, sw):
    return (hp - kh) // sh + 1, (wp - kw) // sw + 1


def _im2col(xp, kh, kw, sh, sw):
    # (B*OH*OW, Cin*kh*kw), rows ordered (b, oh, ow), columns (ci, y, x)
    b, cin = xp.shape[:2]
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]
    oh, ow = win.shape[2:4]
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(b * oh * ow, cin * kh * kw)


def _tap(arr, y, x, oh, ow, sh, sw):
    return arr[:, :, y:y + sh * (oh - 1) + 1:sh, x:x + sw * (ow - 1) + 1:sw]


def dense_forward(xp, w, sh, sw):
    cout, cin, kh, kw = w.shape
    b = xp.shape[0]
    oh, ow = _out_extent(xp.shape[2], xp.shape[3], kh, kw, sh, sw)
    out = _im2col(xp, kh, kw, sh, sw) @ w.reshape(cout, -1).T
    return np.ascontiguousarray(out.reshape(b, oh, ow, cout).transpose(0, 3, 1, 2))


def dense_grad_weight(xp, gout, sh, sw, kh, kw):
    b, cout, oh, ow = gout.shape
    g2 = gout.transpose(0, 2, 3, 1).reshape(-1, cout)
    return (g2.T @ _im2col(xp, kh, kw, sh, sw)).reshape(cout, xp.shape[1], kh, kw)


def dense_grad_input(gout, w, sh, sw, hp, wp):
    b, cout, oh, ow = gout.shape
    _, cin, kh, kw = w.shape
    g2 = gout.transpose(0, 2, 3, 1).reshape(-1, cout)
    cols = (g2 @ w.reshape(cout, -1)).reshape(b, oh, ow, cin, kh, kw)
    gxp = np.zeros((b, cin, hp, wp))
    for y in range(kh):
        for x in range(kw):
            _tap(gxp, y, x, oh, ow, sh, sw)[...] += cols[..., y, x].transpose(0, 3, 1, 2)
    return gxp


def conv_forward(xp, w, groups, sh, sw):
    if groups == 1:
        return dense_forward(xp, w, sh, sw)
    cout, cg, kh, kw = w.shape
    b = xp.shape[0]
    og = cout // groups
    oh, ow = _out_extent(xp.shape[2], xp.shape[3], kh, kw, sh, sw)
    xg = xp.reshape(b, groups, cg, xp.shape[2], xp.shape[3])
    wg = w.reshape(groups, og, cg, kh, kw)
    out = np.zeros((b, groups, og, oh, ow))
    for y in range(kh):
        for x in range(kw):
            xs = xg[:, :, :, y:y + sh * (oh - 1) + 1:sh, x:x + sw * (ow - 1) + 1:sw]
            if cg == 1:
                out += xs * wg[None, :, :, 0, y, x, None, None]
            else:
                out += np.einsum("bgihw,goi->bgohw", xs, wg[..., y, x])
    return out.reshape(b, cout, oh, ow)


def conv_grad_weight(xp, gout, groups, sh, sw, kh, kw):
    if groups == 1:
        return dense_grad_weight(xp, gout, sh, sw, kh, kw)
    b, cout, oh, ow = gout.shape
    cg = xp.shape[1] // groups
    og = cout // groups
    xg = xp.reshape(b, groups, cg, xp.shape[2], xp.shape[3])
    gg = gout.reshape(b, groups, og, oh, ow)
    gw = np.empty((groups, og, cg, kh, kw))
    for y in range(kh):
        for x in range(kw):
            xs = xg[:, :, :, y:y + sh * (oh - 1) + 1:sh, x:x + sw * (ow - 1) + 1:sw]
            gw[..., y, x] = np.einsum("bgohw,bgihw->goi", gg, xs)
    return gw.reshape(cout, cg, kh, kw)


def conv_grad_input(gout, w, groups, sh, sw, hp, wp):
    if groups == 1:
        return dense_grad_input(gout, w, sh, sw, hp, wp)
    b, cout, oh, ow = gout.shape
    _, cg, kh, kw = w.shape
    og = cout // groups
    gxp = np.zeros((b, groups, cg, hp, wp))
    gg = gout.reshape(b, groups, og, oh, ow)
    wg = w.reshape(groups, og, cg, kh, kw)
    for y in range(kh):
        for x in range(kw):
            if cg == 1:
                contrib = (gg * wg[None, :, :, 0, y, x, None, None]).sum(axis=2, keepdims=True)
            else:
                contrib = np.einsum("bgohw,goi->bgihw", gg, wg[..., y, x])
            gxp[:, :, :, y:y + sh * (oh - 1) + 1:sh, x:x + sw * (ow - 1) + 1:sw] += contrib
    return gxp.reshape(b, groups * cg, hp, wp)
