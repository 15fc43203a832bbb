from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='PipelineRun',
            fields=[
                ('id', models.BigAutoField(primary_key=True, serialize=False)),
                ('stage', models.CharField(max_length=40)),
                ('status', models.CharField(choices=[('running', 'Running'), ('success', 'Success'), ('failed', 'Failed')], default='running', max_length=10)),
                ('config', models.JSONField(default=dict)),
                ('manifest', models.JSONField(default=dict)),
                ('error_message', models.TextField(blank=True, default='')),
                ('started_at', models.DateTimeField(auto_now_add=True)),
                ('finished_at', models.DateTimeField(blank=True, null=True)),
            ],
            options={
                'db_table': 'pipeline_runs',
                'ordering': ['-started_at'],
                'indexes': [
                    models.Index(fields=['stage', '-started_at'], name='pipeline_run_stage_idx'),
                    models.Index(fields=['status'], name='pipeline_run_status_idx'),
                ],
            },
        ),
    ]
