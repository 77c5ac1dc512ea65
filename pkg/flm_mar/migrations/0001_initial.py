from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name='RunManifest',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('command', models.CharField(choices=[('simulate', 'Simulate a dataset'), ('fit', 'Fit a slope'), ('test', 'Test linearity'), ('mc', 'Monte Carlo experiment')], max_length=16)),
                ('config', models.JSONField(default=dict)),
                ('seed', models.BigIntegerField(blank=True, null=True)),
                ('version', models.CharField(max_length=32)),
                ('input_digests', models.JSONField(default=dict)),
                ('outputs', models.JSONField(default=list)),
                ('wall_time', models.FloatField(blank=True, null=True)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
            ],
            options={
                'ordering': ['-created_at'],
            },
        ),
    ]
