from ...gallery import KINDS
from ._base import LabCommand


class Command(LabCommand):
    help = "Periodic multiplier example: column norms stay bounded while the resolved norm diverges"
    stages = ('generate', 'counterexample')

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--singularity', default=None, choices=KINDS)
        parser.add_argument('--mapping', default=None, choices=['positive', 'symmetric'])

    def overrides(self, options):
        return {**super().overrides(options), 'generator': 'periodic', 'b': 'fit',
                'singularity': options.get('singularity'), 'mapping': options.get('mapping')}
