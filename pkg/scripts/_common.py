from inflap.core import Ball, Grid, build_mask


def ball(h, radius=1.0, dim=1):
    return build_mask(Grid.centered(dim, h, radius), Ball((0.0,) * dim, radius))
