from .conv_layers import gcn_forward, gat_forward, sage_forward, graphconv_forward, \
    gcn_param_shapes, gat_param_shapes, sage_param_shapes, graphconv_param_shapes


AVAILABLE_CONVS = {
    'gcn': gcn_forward,
    'gat': gat_forward,
    'sage': sage_forward,
    'graphconv': graphconv_forward,
}

CONV_PARAM_SHAPES = {
    'gcn': gcn_param_shapes,
    'gat': gat_param_shapes,
    'sage': sage_param_shapes,
    'graphconv': graphconv_param_shapes,
}
