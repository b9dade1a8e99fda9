from django import forms

from .conf import lab_setting
from .gallery import KINDS

GENERATORS = ('power', 'condensing', 'periodic')
PERTURBATIONS = ('random', 'hermitian', 'zero')
MAPPINGS = ('positive', 'symmetric')


def _choices(values):
    return [(value, value) for value in values]


def _number_or(keyword, value, field, minimum=None, strict=False):
    if value in (None, ''):
        return keyword
    if str(value) == keyword:
        return keyword
    try:
        number = float(value)
    except (TypeError, ValueError):
        raise forms.ValidationError(f'{field} must be a number or "{keyword}"')
    if minimum is not None and (number <= minimum if strict else number < minimum):
        relation = '>' if strict else '>='
        raise forms.ValidationError(f'{field} must be {relation} {minimum}')
    return number


class ScenarioForm(forms.Form):
    """Validates the flat scenario config; ``b``, ``a`` and ``h`` accept a keyword or a number."""

    name = forms.CharField(max_length=200)
    generator = forms.ChoiceField(choices=_choices(GENERATORS))
    alpha = forms.FloatField(min_value=1e-6)
    singularity = forms.ChoiceField(choices=_choices(KINDS))
    kappa = forms.FloatField()
    mapping = forms.ChoiceField(choices=_choices(MAPPINGS))
    perturbation = forms.ChoiceField(choices=_choices(PERTURBATIONS))
    truncation = forms.IntegerField(min_value=2)
    beta = forms.FloatField(max_value=0.999999)
    b = forms.CharField()
    a = forms.CharField()
    h = forms.CharField()
    r_start = forms.FloatField(min_value=0)
    r_stop = forms.FloatField(min_value=0)
    r_step = forms.FloatField(min_value=1e-9)
    output_dir = forms.CharField(required=False)
    seed = forms.IntegerField(min_value=0)
    lacuna_points = forms.IntegerField(min_value=5)
    eta = forms.FloatField(min_value=0)
    parabola_h = forms.FloatField(min_value=1e-9)
    riesz = forms.BooleanField(required=False)

    def clean_truncation(self):
        truncation = self.cleaned_data['truncation']
        max_dim = lab_setting('MAX_DIM')
        if truncation > max_dim:
            raise forms.ValidationError(f'truncation must not exceed {max_dim}')
        return truncation

    def clean_b(self):
        return _number_or('fit', self.cleaned_data.get('b'), 'b', minimum=0)

    def clean_a(self):
        return _number_or('auto', self.cleaned_data.get('a'), 'a', minimum=0, strict=True)

    def clean_h(self):
        return _number_or('auto', self.cleaned_data.get('h'), 'h', minimum=0, strict=True)

    def clean(self):
        cleaned = super().clean()
        start, stop = cleaned.get('r_start'), cleaned.get('r_stop')
        if start is not None and stop is not None and start >= stop:
            self.add_error('r_stop', 'r_stop must exceed r_start')
        generator = cleaned.get('generator')
        if generator == 'periodic' and cleaned.get('truncation', 0) % 2:
            self.add_error('truncation', 'the periodic example needs an even truncation')
        if cleaned.get('b') == 'fit' and generator != 'periodic' and cleaned.get('perturbation') != 'zero':
            self.add_error('b', 'b = "fit" needs a given perturbation (periodic generator or zero)')
        return cleaned
