"""
Forms for the crp app.
Parses and validates instance documents (one ``key = value`` per line).
"""
import math
import re

from django import forms
from django.core.validators import MinValueValidator

from .core import INFLUENCE_FAMILIES, SCALAR_PARAMETERS, CrpInstance
from .exceptions import InvalidParameterError

INSTANCE_KEYS = (
    'A0', 'I0', 'T', 'x_max', 'mu', 'delta1', 'delta2', 'alpha',
    'beta1', 'beta2', 'omega1', 'omega2',
)

INFLUENCE_PATTERN = re.compile(r'^(?P<family>[a-z]+)\(\s*(?P<first>[^,()]+?)\s*,\s*(?P<second>[^,()]+?)\s*\)$')


def positive(value):
    if value <= 0:
        raise forms.ValidationError("Must be strictly positive.")


def parse_influence(text):
    """
    Parse ``arctan(a, b)``, ``log(a, b)`` or ``power(a, p)``.
    """
    match = INFLUENCE_PATTERN.match(text.strip())
    if not match or match['family'] not in INFLUENCE_FAMILIES:
        raise forms.ValidationError(
            "Expected arctan(a, b), log(a, b) or power(a, p), got %(text)r.",
            params={'text': text},
        )
    try:
        first, second = float(match['first']), float(match['second'])
    except ValueError:
        raise forms.ValidationError("Influence coefficients must be decimal numbers.")
    try:
        return INFLUENCE_FAMILIES[match['family']](first, second)
    except InvalidParameterError as exc:
        raise forms.ValidationError(str(exc))


class InfluenceField(forms.CharField):
    def to_python(self, value):
        value = super().to_python(value)
        return parse_influence(value) if value else value


class InstanceForm(forms.Form):
    """
    Form holding the twelve instance parameters.
    """
    A0 = forms.FloatField(validators=[MinValueValidator(0)])
    I0 = forms.FloatField(validators=[MinValueValidator(0)])
    T = forms.FloatField(validators=[positive])
    x_max = forms.FloatField(validators=[positive])
    mu = forms.FloatField(validators=[positive])
    delta1 = forms.FloatField(validators=[positive])
    delta2 = forms.FloatField(validators=[positive])
    alpha = forms.FloatField(validators=[positive])
    beta1 = InfluenceField()
    beta2 = InfluenceField()
    omega1 = forms.FloatField(validators=[positive])
    omega2 = forms.FloatField(validators=[MinValueValidator(0)])

    def clean(self):
        cleaned_data = super().clean()
        beta2 = cleaned_data.get('beta2')
        if cleaned_data.get('A0') == 0 and beta2 is not None \
                and not math.isfinite(beta2.max_derivative()):
            self.add_error('A0', f"must be > 0 when beta2 = {beta2} (infinite derivative at zero)")
        return cleaned_data

    def to_instance(self):
        """
        Build the instance from cleaned data.
        Call only after ``is_valid()``; may emit a ParameterWarning.
        """
        return CrpInstance(**{key: self.cleaned_data[key] for key in INSTANCE_KEYS})


def _split_lines(document):
    """
    Yield (line number, key, value) for each assignment line.
    Blank lines and ``#`` comments are skipped.
    """
    for number, raw in enumerate(document.splitlines(), start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition('=')
        if not sep:
            raise forms.ValidationError(f"line {number}: expected 'key = value', got {raw.strip()!r}")
        yield number, key.strip(), value.strip()


def parse_instance(document):
    """
    Parse an instance document into a validated CrpInstance.

    Errors are raised as ValidationError naming the first offending line
    and key. A ParameterWarning is emitted when delta2 does not exceed
    delta1.
    """
    data, lines = {}, {}
    for number, key, value in _split_lines(document):
        if key not in INSTANCE_KEYS:
            raise forms.ValidationError(f"line {number}: unknown key {key!r}")
        if key in data:
            raise forms.ValidationError(
                f"line {number}: duplicate key {key!r} (first set on line {lines[key]})"
            )
        data[key], lines[key] = value, number

    missing = [key for key in INSTANCE_KEYS if key not in data]
    if missing:
        raise forms.ValidationError(f"missing key {missing[0]!r}")

    form = InstanceForm(data)
    if not form.is_valid():
        key = min(form.errors, key=lambda name: lines.get(name, 0))
        raise forms.ValidationError(
            f"line {lines.get(key, '?')}: {key}: {' '.join(form.errors[key])}"
        )
    return form.to_instance()


def serialize_instance(inst):
    """
    Write an instance in the document format read by ``parse_instance``.
    """
    values = inst.as_dict()
    lines = [f"{key} = {values[key]!r}" if key in SCALAR_PARAMETERS else f"{key} = {values[key]}"
             for key in INSTANCE_KEYS]
    return '\n'.join(lines) + '\n'
