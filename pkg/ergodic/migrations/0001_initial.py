# Generated by Django 4.2.2 on 2026-10-17 09:12

from django.db import migrations, models
import django.db.models.deletion


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='ExperimentRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('command', models.CharField(max_length=50)),
                ('config_hash', models.CharField(help_text='SHA-256 of the normalized config lines', max_length=64)),
                ('config_path', models.CharField(blank=True, max_length=500)),
                ('seeds', models.JSONField(default=list)),
                ('version', models.CharField(max_length=20)),
                ('status', models.CharField(choices=[('running', 'The run has started'), ('passed', 'The run finished and every check passed'), ('failed', 'At least one verification check failed'), ('config_error', 'The configuration was rejected'), ('exhausted', 'A precision cap or the scan horizon was reached')], default='running', max_length=20)),
                ('exit_code', models.IntegerField(blank=True, null=True)),
                ('out_dir', models.CharField(blank=True, max_length=500)),
                ('message', models.TextField(blank=True)),
                ('started_at', models.DateTimeField(auto_now_add=True)),
                ('finished_at', models.DateTimeField(blank=True, null=True)),
            ],
        ),
        migrations.CreateModel(
            name='CheckRecord',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('check_name', models.CharField(max_length=100)),
                ('parameters', models.JSONField(default=dict)),
                ('passed', models.BooleanField()),
                ('measured', models.JSONField(blank=True, null=True)),
                ('bound', models.JSONField(blank=True, null=True)),
                ('witness', models.JSONField(blank=True, null=True)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='checks', to='ergodic.experimentrun')),
            ],
            options={
                'ordering': ('run', 'id'),
            },
        ),
    ]
